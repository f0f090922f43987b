use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::providers::{GenerationRequest, TextGenerator};

use super::extract_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemporalScope {
    Range { start: String, end: String },
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueConstraint {
    pub attribute: String,
    pub value: String,
}

impl ValueConstraint {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            value: value.into(),
        }
    }
}

/// Accepts `{"attribute":..,"value":..}` objects as well as `[attr, value]` pairs.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawConstraint {
    Object {
        attribute: String,
        value: serde_json::Value,
    },
    Pair(String, serde_json::Value),
}

fn literal(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub entities: Vec<String>,
    pub measures: Vec<String>,
    pub temporal_scope: Option<TemporalScope>,
    pub granularity: Option<String>,
    pub value_constraints: Vec<ValueConstraint>,
}

#[derive(Deserialize)]
struct RawConstraintSet {
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    measures: Vec<String>,
    #[serde(default)]
    temporal_scope: Option<TemporalScope>,
    #[serde(default)]
    granularity: Option<String>,
    #[serde(default)]
    value_constraints: Vec<RawConstraint>,
}

impl From<RawConstraintSet> for ConstraintSet {
    fn from(r: RawConstraintSet) -> Self {
        Self {
            entities: r.entities,
            measures: r.measures,
            temporal_scope: r.temporal_scope,
            granularity: r.granularity.filter(|g| !g.trim().is_empty()),
            value_constraints: r
                .value_constraints
                .into_iter()
                .map(|c| match c {
                    RawConstraint::Object { attribute, value }
                    | RawConstraint::Pair(attribute, value) => {
                        ValueConstraint::new(attribute, literal(value))
                    }
                })
                .collect(),
        }
    }
}

impl ConstraintSet {
    pub fn is_trivial(&self) -> bool {
        self.entities.is_empty() && self.measures.is_empty()
    }

    /// Multi-line summary used in policy prompts.
    pub fn render(&self) -> String {
        let list = |v: &[String]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.join("; ")
            }
        };
        let scope = match &self.temporal_scope {
            Some(TemporalScope::Range { start, end }) if start == end => start.clone(),
            Some(TemporalScope::Range { start, end }) => format!("{start} to {end}"),
            Some(TemporalScope::Named(n)) => n.clone(),
            None => "-".into(),
        };
        let values: Vec<String> = self
            .value_constraints
            .iter()
            .map(|c| format!("{} = {}", c.attribute, c.value))
            .collect();
        format!(
            "- entities: {}\n- measures: {}\n- temporal scope: {scope}\n- granularity: {}\n- value constraints: {}",
            list(&self.entities),
            list(&self.measures),
            self.granularity.as_deref().unwrap_or("-"),
            list(&values)
        )
    }
}

const DECOMPOSE_TOKENS: u32 = 400;

fn decompose_prompt(task: &str) -> String {
    format!(
        "Decompose the data task below into search constraints.\n\
         Reply with one JSON object and nothing else, with keys:\n\
         \"entities\": list of named entities,\n\
         \"measures\": list of required quantities or attributes,\n\
         \"temporal_scope\": null, a period name, or {{\"start\": .., \"end\": ..}},\n\
         \"granularity\": null or text such as \"daily\" or \"annual\",\n\
         \"value_constraints\": list of {{\"attribute\": .., \"value\": ..}} literals.\n\n\
         Task: {task}"
    )
}

/// Asks the provider for a JSON constraint set, reprompts once on malformed
/// output, then falls back to [`rule_based`].
pub fn decompose(task: &str, gen: Option<&dyn TextGenerator>) -> ConstraintSet {
    let Some(gen) = gen else {
        return rule_based(task);
    };
    let mut prompt = decompose_prompt(task);
    for attempt in 0..2 {
        let reply = match gen.generate(&GenerationRequest::new(prompt.clone(), DECOMPOSE_TOKENS)) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("decompose: provider failed ({e}), using rules");
                return rule_based(task);
            }
        };
        match extract_json(&reply).and_then(|j| serde_json::from_str::<RawConstraintSet>(j).ok()) {
            Some(raw) => return raw.into(),
            None if attempt == 0 => {
                prompt = format!(
                    "{}\n\nYour previous reply was rejected because it was not a JSON object with the keys above. Reply again.",
                    decompose_prompt(task)
                );
            }
            None => {}
        }
    }
    log::warn!("decompose: malformed replies, using rules");
    rule_based(task)
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

const STOPWORDS: &[&str] = &[
    "A",
    "An",
    "And",
    "The",
    "Of",
    "In",
    "On",
    "For",
    "To",
    "By",
    "With",
    "From",
    "At",
    "Or",
    "Per",
    "Is",
    "Are",
    "How",
    "What",
    "Which",
    "Who",
    "When",
    "Where",
    "Why",
    "Find",
    "Compute",
    "Calculate",
    "List",
    "Show",
    "Give",
    "Using",
    "Use",
    "Return",
    "Report",
    "Table",
    "Tables",
    "Total",
    "Identify",
    "Determine",
    "Confirm",
    "Compare",
    "Please",
    "Then",
    "Also",
    "Count",
    "Number",
    "Average",
    "Mean",
];

fn push_unique(v: &mut Vec<String>, s: String) {
    if !s.is_empty() && !v.iter().any(|x| x.eq_ignore_ascii_case(&s)) {
        v.push(s);
    }
}

/// Capitalized runs (sentence-initial words only when all caps or multi-word),
/// table names after the word "table", quoted literals as value constraints,
/// four-digit years as temporal scope and simple aggregate phrases as measures.
pub fn rule_based(task: &str) -> ConstraintSet {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    static YEAR: OnceLock<Regex> = OnceLock::new();
    static WORD: OnceLock<Regex> = OnceLock::new();
    static TABLE: OnceLock<Regex> = OnceLock::new();
    static AGG: OnceLock<Regex> = OnceLock::new();

    let mut out = ConstraintSet::default();

    let quoted = re(
        &QUOTED,
        r#"(?:([A-Za-z_][A-Za-z0-9_]*)\s*(?:=|is|of)?\s*)?(?:"([^"]+)"|“([^”]+)”|\B'([^']+)'\B)"#,
    );
    for c in quoted.captures_iter(task) {
        let attr = c.get(1).map_or("value", |m| m.as_str());
        if let Some(v) = c.get(2).or(c.get(3)).or(c.get(4)) {
            out.value_constraints
                .push(ValueConstraint::new(attr, v.as_str().trim()));
        }
    }

    let years: Vec<String> = re(&YEAR, r"\b(1[89]\d{2}|20\d{2})\b")
        .find_iter(task)
        .map(|m| m.as_str().to_string())
        .collect();
    if let (Some(lo), Some(hi)) = (years.iter().min(), years.iter().max()) {
        out.temporal_scope = Some(TemporalScope::Range {
            start: lo.clone(),
            end: hi.clone(),
        });
    }
    for y in &years {
        if !out.value_constraints.iter().any(|c| c.value == *y) {
            out.value_constraints
                .push(ValueConstraint::new("Year", y.clone()));
        }
    }

    for c in re(&TABLE, r"\btables?\s+([A-Za-z_][A-Za-z0-9_.]*)").captures_iter(task) {
        let name = c[1].trim_end_matches('.').to_string();
        if !STOPWORDS.iter().any(|s| s.eq_ignore_ascii_case(&name)) {
            push_unique(&mut out.entities, name);
        }
    }

    // Capitalized runs. A word counts as sentence-initial when it follows
    // start of text or terminal punctuation.
    let mut run: Vec<&str> = Vec::new();
    let mut run_initial = false;
    let flush = |run: &mut Vec<&str>, initial: bool, out: &mut ConstraintSet| {
        let words: Vec<&str> = std::mem::take(run);
        let words: Vec<&str> = words
            .into_iter()
            .skip_while(|w| STOPWORDS.contains(w))
            .collect();
        let all_caps = words.len() == 1
            && words[0].len() >= 2
            && words[0]
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        let keep = !words.is_empty() && (!initial || words.len() > 1 || all_caps);
        if keep && !(words.len() == 1 && STOPWORDS.contains(&words[0])) {
            push_unique(&mut out.entities, words.join(" "));
        }
    };
    let mut prev_end = 0usize;
    for m in re(&WORD, r"[A-Za-z][A-Za-z0-9_]*").find_iter(task) {
        let gap = &task[prev_end..m.start()];
        let initial =
            prev_end == 0 && gap.trim().is_empty() || gap.contains(['.', '?', '!', ':', '\n']);
        let broken = initial || gap.contains([',', ';', '(', ')', '"', '“', '”', '\'']);
        if broken && !run.is_empty() {
            flush(&mut run, run_initial, &mut out);
        }
        let word = m.as_str();
        if word.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
            if run.is_empty() {
                run_initial = initial;
            }
            run.push(word);
        } else if !run.is_empty() {
            flush(&mut run, run_initial, &mut out);
        }
        prev_end = m.end();
    }
    if !run.is_empty() {
        flush(&mut run, run_initial, &mut out);
    }
    out.entities.retain(|e| !years.contains(e));

    let lower = task.to_lowercase();
    if [
        "how many rows",
        "number of rows",
        "row count",
        "count of rows",
    ]
    .iter()
    .any(|p| lower.contains(p))
    {
        push_unique(&mut out.measures, "row count".into());
    }
    let agg = re(
        &AGG,
        r"\b(total|average|mean|median|maximum|minimum|max|min|sum|share|percentage|percent|proportion|rate|count)\s+(?:number\s+)?(?:of\s+)?(?:the\s+)?([a-z][a-z_-]+)",
    );
    for c in agg.captures_iter(&lower) {
        let kind = match &c[1] {
            "mean" => "average",
            "max" => "maximum",
            "min" => "minimum",
            "percent" => "percentage",
            k => k,
        };
        if !["of", "the", "a", "an", "in", "rows"].contains(&&c[2]) {
            push_unique(&mut out.measures, format!("{kind} {}", &c[2]));
        }
    }
    if lower.contains("per capita") || lower.contains("population") {
        push_unique(&mut out.measures, "population".into());
    }

    for (pat, grain) in [
        ("daily", "daily"),
        ("per day", "daily"),
        ("hourly", "hourly"),
        ("weekly", "weekly"),
        ("monthly", "monthly"),
        ("per month", "monthly"),
        ("annual", "annual"),
        ("yearly", "annual"),
        ("per year", "annual"),
        ("per state", "state"),
        ("by state", "state"),
    ] {
        if lower.contains(pat) {
            out.granularity = Some(grain.to_string());
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedGenerator;

    #[test]
    fn row_count_task() {
        let c = rule_based("How many rows in table X?");
        assert_eq!(c.measures, ["row count"]);
        assert_eq!(c.entities, ["X"]);
    }

    #[test]
    fn rules_on_identity_theft_task() {
        let c = rule_based(
            "Rank states by total reports of identity theft and fraud relative to population, and confirm the presence of DC and PR.",
        );
        for e in ["DC", "PR"] {
            assert!(c.entities.iter().any(|x| x == e), "{:?}", c.entities);
        }
        for m in ["total reports", "population"] {
            assert!(c.measures.iter().any(|x| x == m), "{:?}", c.measures);
        }
    }

    #[test]
    fn years_quotes_and_runs() {
        let c = rule_based("Compare the category share in 2024 with the total number of reports in 2007 for region \"East Bohemia\" in Puerto Rico.");
        assert_eq!(
            c.temporal_scope,
            Some(TemporalScope::Range {
                start: "2007".into(),
                end: "2024".into()
            })
        );
        assert!(c
            .value_constraints
            .contains(&ValueConstraint::new("region", "East Bohemia")));
        assert!(c
            .value_constraints
            .contains(&ValueConstraint::new("Year", "2007")));
        assert!(c.entities.contains(&"Puerto Rico".to_string()));
        assert!(c.measures.contains(&"total reports".to_string()));
    }

    #[test]
    fn provider_json_is_used() {
        let gen = ScriptedGenerator::new([
            r#"{"entities":["Year 2007"],"measures":["total reports","2024 category percentage"],"temporal_scope":{"start":"2007","end":"2024"},"value_constraints":[["Year",2007]]}"#,
        ]);
        let c = decompose("legal task", Some(&gen));
        assert_eq!(c.value_constraints, [ValueConstraint::new("Year", "2007")]);
        assert!(c
            .measures
            .iter()
            .any(|m| m.contains("2024") && m.contains("percentage")));
    }

    #[test]
    fn malformed_reply_reprompts_then_falls_back() {
        let gen = ScriptedGenerator::new([
            "not json",
            r#"```json
{"entities":["DC","PR"],"measures":["population"],"temporal_scope":"2024","granularity":"annual","value_constraints":[{"attribute":"State","value":"PR"}]}
```"#,
        ]);
        let c = decompose("whatever", Some(&gen));
        assert_eq!(c.entities, ["DC", "PR"]);
        assert_eq!(c.temporal_scope, Some(TemporalScope::Named("2024".into())));
        assert!(gen.prompts()[1].contains("rejected"));

        let gen = ScriptedGenerator::new(["nope", "still nope"]);
        assert_eq!(
            decompose("How many rows in table X?", Some(&gen)),
            rule_based("How many rows in table X?")
        );
        let empty = ScriptedGenerator::default();
        assert_eq!(
            decompose("How many rows in table X?", Some(&empty)).entities,
            ["X"]
        );
    }
}
