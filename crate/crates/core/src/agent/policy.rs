use std::path::Path;

use crate::providers::{GenerationRequest, ProviderError, TextGenerator};

use super::{ConstraintSet, TranscriptStep};

pub const OBSERVATION_WINDOW: usize = 8;
const POLICY_TOKENS: u32 = 512;

/// Everything a policy sees before choosing its next action.
#[derive(Debug, Clone, Copy)]
pub struct PolicyState<'a> {
    pub task: &'a str,
    pub constraints: &'a ConstraintSet,
    pub transcript: &'a [TranscriptStep],
    pub remaining_steps: usize,
    pub tools_enabled: bool,
    /// Why the previous reply was rejected, when reprompting.
    pub feedback: Option<&'a str>,
}

pub trait Policy {
    fn next_action(&mut self, state: &PolicyState<'_>) -> Result<String, ProviderError>;
}

/// Replays a fixed list of replies; optionally cycles forever.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    lines: Vec<String>,
    pos: usize,
    cycle: bool,
}

impl ScriptedPolicy {
    pub fn new<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            lines: lines.into_iter().map(Into::into).collect(),
            pos: 0,
            cycle: false,
        }
    }

    pub fn cycling<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            cycle: true,
            ..Self::new(lines)
        }
    }

    /// One reply per non-empty line; lines starting with `#` are comments.
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        ))
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

impl Policy for ScriptedPolicy {
    fn next_action(&mut self, _state: &PolicyState<'_>) -> Result<String, ProviderError> {
        if self.lines.is_empty() || (!self.cycle && self.pos >= self.lines.len()) {
            return Err(ProviderError::ScriptExhausted);
        }
        let line = self.lines[self.pos % self.lines.len()].clone();
        self.pos += 1;
        Ok(line)
    }
}

/// Prompts a text generator with [`render_prompt`].
pub struct LlmPolicy<'a> {
    gen: &'a dyn TextGenerator,
    window: usize,
}

impl<'a> LlmPolicy<'a> {
    pub fn new(gen: &'a dyn TextGenerator) -> Self {
        Self {
            gen,
            window: OBSERVATION_WINDOW,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }
}

impl Policy for LlmPolicy<'_> {
    fn next_action(&mut self, state: &PolicyState<'_>) -> Result<String, ProviderError> {
        self.gen.generate(&GenerationRequest::new(
            render_prompt(state, self.window),
            POLICY_TOKENS,
        ))
    }
}

fn clip(s: &str, n: usize) -> String {
    let line = s.lines().next().unwrap_or("");
    if line.chars().count() <= n {
        line.to_string()
    } else {
        format!("{}...", line.chars().take(n).collect::<String>())
    }
}

/// One line summarizing the steps that fell out of the observation window.
pub fn digest(older: &[TranscriptStep]) -> String {
    older
        .iter()
        .map(|s| {
            format!(
                "step {}: {} -> {}",
                s.step,
                clip(&s.action.to_string(), 70),
                clip(&s.observation, 50)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn render_prompt(state: &PolicyState<'_>, window: usize) -> String {
    let mut p = String::new();
    p.push_str(
        "You select tables from a data lake for an analytical task. The final set must be sufficient \
         (covers every entity, measure and period the task needs) and minimal (no table can be dropped).\n\n",
    );
    p.push_str(&format!(
        "Task: {}\n\nConstraints:\n{}\n\n",
        state.task,
        state.constraints.render()
    ));
    p.push_str("Available actions:\n");
    p.push_str("- search: semantic search over table descriptions; tables already shown are only marked as repeats\n");
    if state.tools_enabled {
        p.push_str("- column_profiler: exact statistics of one column (range, mean, distinct values, nulls, histogram)\n");
        p.push_str(
            "- data_finder: checks whether a value such as an id or a code occurs in a table\n",
        );
        p.push_str("- joinability_check: value overlap and containment between two columns of two tables\n");
    }
    p.push_str("- finalize: submit the selected tables with a justification\n\n");

    let split = state.transcript.len().saturating_sub(window);
    let (older, recent) = state.transcript.split_at(split);
    if !older.is_empty() {
        p.push_str(&format!("Earlier steps: {}\n\n", digest(older)));
    }
    if recent.is_empty() {
        p.push_str("No observations yet.\n\n");
    } else {
        p.push_str("Recent observations:\n");
        for s in recent {
            p.push_str(&format!(
                "[step {}] {}\n{}\n\n",
                s.step, s.action, s.observation
            ));
        }
    }
    p.push_str(&format!("Remaining steps: {}\n\n", state.remaining_steps));
    p.push_str("Plan briefly, then reply with exactly one line in one of these forms:\n");
    p.push_str("ACTION search query=\"<text>\"\n");
    if state.tools_enabled {
        p.push_str("ACTION tool name=column_profiler table=<table_id> column=<column>\n");
        p.push_str(
            "ACTION tool name=data_finder table=<table_id> value=\"<value>\" [column=<column>]\n",
        );
        p.push_str(
            "ACTION tool name=joinability_check left=<table_id.column> right=<table_id.column>\n",
        );
    }
    p.push_str("ACTION finalize tables=[<id1>,<id2>] justification=\"<text>\"\n");
    p.push_str("Use tables=[] only when no sufficient set exists.\n");
    if let Some(f) = state.feedback {
        p.push_str(&format!("\nYour previous reply was rejected: {f}\n"));
    }
    p
}
