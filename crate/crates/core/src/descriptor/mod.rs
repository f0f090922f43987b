//! Per-table text artifacts: the attached content summary (schema plus
//! statistics) and the group-aware discriminative description used for
//! embedding. Both have a generator-backed path and a deterministic template.

mod format;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::{column_facts, fmt_float, fmt_number, humanize_date, join_list, name_tokens};

use crate::artifacts::{read_jsonl, write_jsonl, JsonlError};
use crate::catalog::{CatalogStore, ColumnType, TableEntry};
use crate::profiler::{ColumnProfile, TableProfile};
use crate::providers::{GenerationRequest, TextGenerator};

pub const DESCRIPTORS_FORMAT: &str = "metalake-descriptors";
pub const DESCRIPTORS_VERSION: u32 = 1;

const MAX_LISTED_VALUES: u64 = 7;
const GEN_TOKENS: u32 = 1024;

#[derive(Debug, thiserror::Error)]
pub enum DescriptorError {
    #[error("table {member} is not a member of group {group}")]
    NotInGroup { group: String, member: String },
    #[error("no profile for table {0}")]
    MissingProfile(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("descriptors file: {0}")]
    Store(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DescriptorSource {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDescriptor {
    pub table_id: String,
    pub content_summary: String,
    pub discriminative_description: String,
    pub group_id: String,
    pub source: DescriptorSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGroup {
    pub group_id: String,
    pub members: Vec<String>,
    /// Columns whose extremes agree across all members.
    pub shared_variables: Vec<String>,
    /// member -> column -> rendered fact, for columns whose extremes differ.
    pub distinguishing_variables: BTreeMap<String, BTreeMap<String, String>>,
}

impl TableGroup {
    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }
}

/// Stage-one output for a group: a shared context and per-member facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupContext {
    pub shared: String,
    pub per_table: BTreeMap<String, Vec<String>>,
    #[serde(skip, default = "template_source")]
    pub source: DescriptorSource,
}

fn template_source() -> DescriptorSource {
    DescriptorSource::Template
}

fn parent_dir(entry: &TableEntry) -> &str {
    entry.source_path.rsplit_once('/').map_or("", |(d, _)| d)
}

fn column_signature(entry: &TableEntry) -> Vec<String> {
    let mut cols: Vec<String> = entry.columns.iter().map(|c| c.name.clone()).collect();
    cols.sort();
    cols
}

fn extremes_key(p: Option<&ColumnProfile>) -> (String, String) {
    let Some(p) = p else {
        return (String::new(), String::new());
    };
    let ty = p.declared_type;
    (
        p.min
            .as_ref()
            .map(|e| format::fmt_extreme(ty, e))
            .unwrap_or_default(),
        p.max
            .as_ref()
            .map(|e| format::fmt_extreme(ty, e))
            .unwrap_or_default(),
    )
}

/// Distinguishing fact for one member's column: the value itself when
/// constant, the full value list for small date sets, otherwise the range.
fn distinguishing_fact(col: &str, p: Option<&ColumnProfile>) -> String {
    let Some(p) = p else {
        return format!("{col} unknown");
    };
    let ty = p.declared_type;
    let (lo, hi) = extremes_key(Some(p));
    if p.min.is_none() {
        return format!("{col} empty");
    }
    if lo == hi {
        return format!("{col} {lo}");
    }
    let fully_listed =
        p.distinct_count <= MAX_LISTED_VALUES && p.top_k.len() as u64 == p.distinct_count;
    if ty == ColumnType::Date && fully_listed {
        let mut dates: Vec<&str> = p.top_k.iter().map(|v| v.value.as_str()).collect();
        dates.sort();
        let shown: Vec<String> = dates.into_iter().map(humanize_date).collect();
        return format!("{col} {}", join_list(&shown));
    }
    format!("{col} from {lo} to {hi}")
}

/// A numeric column whose member ranges share a common point varies within
/// every table rather than between them, so it tells no member apart.
fn overlapping_measure(profiles: &[Option<&ColumnProfile>]) -> bool {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for p in profiles {
        let Some(p) = p else { return false };
        if !p.declared_type.is_numeric() {
            return false;
        }
        let (Some(a), Some(b)) = (
            p.min.as_ref().and_then(|e| e.as_f64()),
            p.max.as_ref().and_then(|e| e.as_f64()),
        ) else {
            return false;
        };
        if a == b {
            return false;
        }
        lo = lo.max(a);
        hi = hi.min(b);
    }
    lo <= hi
}

/// Groups tables sharing a parent directory and an identical column-name
/// multiset. Groups and members are sorted by id.
pub fn group_tables(
    catalog: &CatalogStore,
    profiles: &BTreeMap<String, TableProfile>,
) -> Vec<TableGroup> {
    let mut buckets: BTreeMap<(String, Vec<String>), Vec<&TableEntry>> = BTreeMap::new();
    for e in catalog.entries.values() {
        buckets
            .entry((parent_dir(e).to_string(), column_signature(e)))
            .or_default()
            .push(e);
    }
    let mut groups: Vec<TableGroup> = buckets
        .into_values()
        .map(|members| make_group(&members, profiles))
        .collect();
    groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    groups
}

fn make_group(members: &[&TableEntry], profiles: &BTreeMap<String, TableProfile>) -> TableGroup {
    let mut members: Vec<&TableEntry> = members.to_vec();
    members.sort_by(|a, b| a.table_id.cmp(&b.table_id));
    let cols: Vec<String> = members[0].columns.iter().map(|c| c.name.clone()).collect();
    let prof = |id: &str, col: &str| profiles.get(id).and_then(|p| p.column(col));
    let mut shared = Vec::new();
    let mut distinguishing: BTreeMap<String, BTreeMap<String, String>> = members
        .iter()
        .map(|m| (m.table_id.clone(), BTreeMap::new()))
        .collect();
    for col in &cols {
        let first = extremes_key(prof(&members[0].table_id, col));
        let differs = members
            .iter()
            .any(|m| extremes_key(prof(&m.table_id, col)) != first);
        let ranges: Vec<Option<&ColumnProfile>> =
            members.iter().map(|m| prof(&m.table_id, col)).collect();
        if members.len() > 1 && differs && !overlapping_measure(&ranges) {
            for m in &members {
                let fact = distinguishing_fact(col, prof(&m.table_id, col));
                distinguishing
                    .get_mut(&m.table_id)
                    .unwrap()
                    .insert(col.clone(), fact);
            }
        } else {
            shared.push(col.clone());
        }
    }
    TableGroup {
        group_id: format!("group:{}", members[0].table_id),
        members: members.iter().map(|m| m.table_id.clone()).collect(),
        shared_variables: shared,
        distinguishing_variables: distinguishing,
    }
}

fn purpose_line(entry: &TableEntry, profile: &TableProfile) -> String {
    if profile.row_count == 0 {
        return "This table is empty (0 rows).".into();
    }
    format!(
        "{} data with {} rows.",
        name_tokens(&entry.name).join(" "),
        profile.row_count
    )
}

fn schema_block(entry: &TableEntry, profile: &TableProfile) -> String {
    let mut lines = vec!["Schema:".to_string()];
    for spec in &entry.columns {
        let null = if spec.nullable {
            "NULLABLE"
        } else {
            "NOT NULL"
        };
        let facts = profile
            .column(&spec.name)
            .map(|p| column_facts(p, profile.row_count))
            .unwrap_or_else(|| "no statistics".into());
        lines.push(format!(
            "- {}: {} ({null}) - {facts}",
            spec.name, spec.declared_type
        ));
    }
    lines.join("\n")
}

fn assemble_summary(entry: &TableEntry, purpose: &str, profile: &TableProfile) -> String {
    let mut out = format!("Table: {}\n", entry.name);
    if let Some(d) = entry
        .user_description
        .as_deref()
        .filter(|d| !d.trim().is_empty())
    {
        out.push_str(d.trim_end());
        out.push('\n');
    }
    out.push_str("Table Description:\n");
    out.push_str(purpose.trim());
    out.push_str("\n\n");
    out.push_str(&schema_block(entry, profile));
    out
}

fn summary_prompt(entry: &TableEntry, profile: &TableProfile) -> String {
    format!(
        "Write one short paragraph describing the purpose and scope of the table below \
         (temporal or geographic scope, granularity, what each row represents). Map cryptic \
         column names to plain domain terms. Reply with the paragraph only.\n\n{}",
        assemble_summary(entry, &purpose_line(entry, profile), profile)
    )
}

/// Schema plus statistics narrative. The per-column block is always rendered
/// mechanically; a generator, when given, only writes the purpose paragraph.
pub fn build_content_summary(
    entry: &TableEntry,
    profile: &TableProfile,
    gen: Option<&dyn TextGenerator>,
) -> (String, DescriptorSource) {
    if let Some(g) = gen {
        match g.generate(&GenerationRequest::new(
            summary_prompt(entry, profile),
            GEN_TOKENS,
        )) {
            Ok(text) if !text.trim().is_empty() => {
                return (
                    assemble_summary(entry, &text, profile),
                    DescriptorSource::Llm,
                )
            }
            Ok(_) => log::warn!("empty summary for {}; using template", entry.table_id),
            Err(e) => log::warn!("summary for {} fell back to template: {e}", entry.table_id),
        }
    }
    (
        assemble_summary(entry, &purpose_line(entry, profile), profile),
        DescriptorSource::Template,
    )
}

fn member_entries<'a>(
    group: &TableGroup,
    catalog: &'a CatalogStore,
) -> Result<Vec<&'a TableEntry>, DescriptorError> {
    group
        .members
        .iter()
        .map(|id| {
            catalog
                .get(id)
                .ok_or_else(|| DescriptorError::UnknownTable(id.clone()))
        })
        .collect()
}

/// Template stage one: shared name stem plus column list, and per-member
/// differing extremes plus differing name tokens.
pub fn template_context(
    group: &TableGroup,
    catalog: &CatalogStore,
) -> Result<GroupContext, DescriptorError> {
    let entries = member_entries(group, catalog)?;
    let token_lists: Vec<Vec<String>> = entries.iter().map(|e| name_tokens(&e.name)).collect();
    let common: Vec<String> = token_lists[0]
        .iter()
        .filter(|t| token_lists.iter().all(|l| l.contains(t)))
        .cloned()
        .collect();
    let stem = if common.is_empty() {
        "related".to_string()
    } else {
        common.join(" ")
    };
    let cols: Vec<&str> = entries[0].column_names();
    let shared = format!("{stem} data with columns {}.", cols.join(", "));
    let mut per_table = BTreeMap::new();
    for (e, tokens) in entries.iter().zip(&token_lists) {
        let mut facts: Vec<String> = group
            .distinguishing_variables
            .get(&e.table_id)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default();
        let own: Vec<&str> = tokens
            .iter()
            .filter(|t| !common.contains(t))
            .map(String::as_str)
            .collect();
        if !own.is_empty() {
            facts.push(format!("identified by {}", own.join(" ")));
        }
        per_table.insert(e.table_id.clone(), facts);
    }
    Ok(GroupContext {
        shared,
        per_table,
        source: DescriptorSource::Template,
    })
}

fn stage_one_prompt(
    group: &TableGroup,
    entries: &[&TableEntry],
    profiles: &BTreeMap<String, TableProfile>,
) -> String {
    let mut p = String::from(
        "The tables below belong to one group of closely related tables. Identify what they \
         share and what distinguishes each one (for example its temporal or geographic scope). \
         Use plain domain terms rather than raw column names.\n\n",
    );
    for e in entries {
        p.push_str(&format!(
            "```table {}\nname: {}\ncolumns: ",
            e.table_id, e.name
        ));
        let cols: Vec<String> = e
            .columns
            .iter()
            .map(|c| format!("{} ({})", c.name, c.declared_type))
            .collect();
        p.push_str(&cols.join(", "));
        p.push_str("\nfacts:\n");
        let prof = profiles.get(&e.table_id);
        let distinguishing = group.distinguishing_variables.get(&e.table_id);
        let mut ordered: Vec<&str> = distinguishing
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default();
        let rest: Vec<&str> = e
            .column_names()
            .into_iter()
            .filter(|c| !ordered.contains(c))
            .collect();
        ordered.extend(rest);
        for col in ordered.into_iter().take(3) {
            if let Some(cp) = prof.and_then(|p| p.column(col)) {
                p.push_str(&format!(
                    "- {col}: {}\n",
                    column_facts(cp, prof.map_or(0, |p| p.row_count))
                ));
            }
        }
        p.push_str("```\n");
    }
    p.push_str(
        "\nReply with only a JSON object of the form \
         {\"shared\": \"<context sentence>\", \"per_table\": {\"<table id>\": [\"<fact>\", ...]}} \
         with an entry for every table id above.",
    );
    p
}

#[derive(Deserialize)]
struct StageOneReply {
    shared: String,
    per_table: BTreeMap<String, Vec<String>>,
}

fn parse_stage_one(text: &str, members: &[String]) -> Result<GroupContext, String> {
    let start = text.find('{').ok_or("no JSON object found")?;
    let end = text.rfind('}').ok_or("no JSON object found")?;
    if end < start {
        return Err("no JSON object found".into());
    }
    let reply: StageOneReply =
        serde_json::from_str(&text[start..=end]).map_err(|e| format!("invalid JSON: {e}"))?;
    if reply.shared.trim().is_empty() {
        return Err("`shared` is empty".into());
    }
    let mut per_table = BTreeMap::new();
    for m in members {
        let facts: Vec<String> = reply
            .per_table
            .get(m)
            .ok_or_else(|| format!("missing per_table entry for {m}"))?
            .iter()
            .map(|f| f.trim().to_string())
            .filter(|f| !f.is_empty())
            .collect();
        if facts.is_empty() {
            return Err(format!("no facts for {m}"));
        }
        per_table.insert(m.clone(), facts);
    }
    Ok(GroupContext {
        shared: reply.shared.trim().to_string(),
        per_table,
        source: DescriptorSource::Llm,
    })
}

/// Stage one for a group: generator output when it parses (one reprompt on
/// failure), otherwise the template context.
pub fn group_context(
    group: &TableGroup,
    catalog: &CatalogStore,
    profiles: &BTreeMap<String, TableProfile>,
    gen: Option<&dyn TextGenerator>,
) -> Result<GroupContext, DescriptorError> {
    if let Some(g) = gen {
        let entries = member_entries(group, catalog)?;
        let base = stage_one_prompt(group, &entries, profiles);
        let mut prompt = base.clone();
        for attempt in 0..2 {
            match g.generate(&GenerationRequest::new(prompt.clone(), GEN_TOKENS)) {
                Ok(text) => match parse_stage_one(&text, &group.members) {
                    Ok(ctx) => return Ok(ctx),
                    Err(why) => {
                        log::warn!(
                            "group {} reply rejected (attempt {}): {why}",
                            group.group_id,
                            attempt + 1
                        );
                        prompt = format!(
                            "{base}\n\nYour previous reply was rejected: {why}. Reply with the JSON object only."
                        );
                    }
                },
                Err(e) => {
                    log::warn!("group {} falls back to template: {e}", group.group_id);
                    break;
                }
            }
        }
    }
    template_context(group, catalog)
}

/// Stage two: shared context followed by the member's distinguishing facts.
pub fn render_discriminative(ctx: &GroupContext, entry: &TableEntry) -> String {
    let facts = ctx
        .per_table
        .get(&entry.table_id)
        .cloned()
        .unwrap_or_default();
    let mut out = format!("Table {}: {}", entry.name, ctx.shared.trim());
    if !facts.is_empty() {
        out.push_str(&format!(" Distinguishing features: {}.", facts.join("; ")));
    }
    out
}

/// Discriminative description of one group member. A singleton group has no
/// peers to contrast, so its description is the content summary.
pub fn build_discriminative_description(
    group: &TableGroup,
    member: &str,
    catalog: &CatalogStore,
    profiles: &BTreeMap<String, TableProfile>,
    gen: Option<&dyn TextGenerator>,
) -> Result<(String, DescriptorSource), DescriptorError> {
    if !group.members.iter().any(|m| m == member) {
        return Err(DescriptorError::NotInGroup {
            group: group.group_id.clone(),
            member: member.to_string(),
        });
    }
    let entry = catalog
        .get(member)
        .ok_or_else(|| DescriptorError::UnknownTable(member.to_string()))?;
    if group.is_singleton() {
        let profile = profiles
            .get(member)
            .ok_or_else(|| DescriptorError::MissingProfile(member.to_string()))?;
        return Ok(build_content_summary(entry, profile, gen));
    }
    let ctx = group_context(group, catalog, profiles, gen)?;
    Ok((render_discriminative(&ctx, entry), ctx.source))
}

fn describe_group(
    group: &TableGroup,
    catalog: &CatalogStore,
    profiles: &BTreeMap<String, TableProfile>,
    gen: Option<&dyn TextGenerator>,
) -> Result<Vec<TableDescriptor>, DescriptorError> {
    let ctx = if group.is_singleton() {
        None
    } else {
        Some(group_context(group, catalog, profiles, gen)?)
    };
    let mut out = Vec::with_capacity(group.members.len());
    for id in &group.members {
        let entry = catalog
            .get(id)
            .ok_or_else(|| DescriptorError::UnknownTable(id.clone()))?;
        let profile = profiles
            .get(id)
            .ok_or_else(|| DescriptorError::MissingProfile(id.clone()))?;
        let (summary, summary_src) = build_content_summary(entry, profile, gen);
        let (disc, disc_src) = match &ctx {
            Some(c) => (render_discriminative(c, entry), c.source),
            None => (summary.clone(), summary_src),
        };
        let source = if summary_src == DescriptorSource::Llm && disc_src == DescriptorSource::Llm {
            DescriptorSource::Llm
        } else {
            DescriptorSource::Template
        };
        out.push(TableDescriptor {
            table_id: id.clone(),
            content_summary: summary,
            discriminative_description: disc,
            group_id: group.group_id.clone(),
            source,
        });
    }
    Ok(out)
}

/// Describes every cataloged table, ordered by id. Template-only runs are
/// parallel across groups; with a generator, groups are processed in order so
/// scripted responses are consumed deterministically.
pub fn describe_catalog(
    catalog: &CatalogStore,
    profiles: &BTreeMap<String, TableProfile>,
    gen: Option<&dyn TextGenerator>,
) -> Result<Vec<TableDescriptor>, DescriptorError> {
    let groups = group_tables(catalog, profiles);
    let nested: Vec<Vec<TableDescriptor>> = match gen {
        None => groups
            .par_iter()
            .map(|g| describe_group(g, catalog, profiles, None))
            .collect::<Result<_, _>>()?,
        Some(_) => groups
            .iter()
            .map(|g| describe_group(g, catalog, profiles, gen))
            .collect::<Result<_, _>>()?,
    };
    let mut all: Vec<TableDescriptor> = nested.into_iter().flatten().collect();
    all.sort_by(|a, b| a.table_id.cmp(&b.table_id));
    Ok(all)
}

pub fn save_descriptors(
    descriptors: &[TableDescriptor],
    path: &Path,
) -> Result<(), DescriptorError> {
    write_jsonl(path, DESCRIPTORS_FORMAT, DESCRIPTORS_VERSION, descriptors)?;
    Ok(())
}

pub fn load_descriptors(path: &Path) -> Result<Vec<TableDescriptor>, DescriptorError> {
    Ok(read_jsonl(path, DESCRIPTORS_FORMAT, DESCRIPTORS_VERSION)?)
}
