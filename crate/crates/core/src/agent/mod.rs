//! Table-selection agent: task decomposition, a line-oriented action
//! grammar and the bounded search/tool/finalize loop.

mod action;
mod decompose;
mod policy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use action::{parse_action, AgentAction, ParseError, ToolCall, TOOL_NAMES};
pub use decompose::{decompose, rule_based, ConstraintSet, TemporalScope, ValueConstraint};
pub use policy::{
    digest, render_prompt, LlmPolicy, Policy, PolicyState, ScriptedPolicy, OBSERVATION_WINDOW,
};

use crate::catalog::CatalogStore;
use crate::descriptor::TableDescriptor;
use crate::providers::{fnv1a64, Embedder, TextGenerator};
use crate::search::{render_block, search, SearchParams, SearchSession, VectorIndex};
use crate::tools::{self, render_profile};

pub const DEFAULT_BUDGET: usize = 30;
/// Rejected replies tolerated per step before the session gives up.
pub const MAX_REPROMPTS: usize = 2;

/// The text between the first `{` and the last `}`.
pub(crate) fn extract_json(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Which kinds of metadata the agent gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Search results show the discriminative description only; no tools.
    Search,
    /// Search results carry the full content summary; no tools.
    Attached,
    /// Discriminative descriptions plus tools.
    Tools,
    #[default]
    Full,
}

impl Ablation {
    pub fn attached(self) -> bool {
        matches!(self, Ablation::Attached | Ablation::Full)
    }

    pub fn tools(self) -> bool {
        matches!(self, Ablation::Tools | Ablation::Full)
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "search" => Ok(Ablation::Search),
            "attached" => Ok(Ablation::Attached),
            "tools" => Ok(Ablation::Tools),
            "full" => Ok(Ablation::Full),
            other => Err(format!(
                "unknown ablation `{other}` (expected search, attached, tools or full)"
            )),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ablation::Search => "search",
            Ablation::Attached => "attached",
            Ablation::Tools => "tools",
            Ablation::Full => "full",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminatedBy {
    Finalize,
    StepBudget,
    PolicyError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub step: usize,
    pub action: AgentAction,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub task: String,
    pub constraints: ConstraintSet,
    pub ablation: Ablation,
    pub tables: Vec<String>,
    pub justification: String,
    pub steps: usize,
    pub transcript: Vec<TranscriptStep>,
    pub terminated_by: TerminatedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Read-only inputs shared by every session over one lake.
pub struct SessionContext<'a> {
    pub catalog: &'a CatalogStore,
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
    pub descriptors: &'a BTreeMap<String, TableDescriptor>,
    /// Used for decomposition; `None` means rule-based constraints.
    pub generator: Option<&'a dyn TextGenerator>,
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub max_steps: usize,
    pub ablation: Ablation,
    pub params: SearchParams,
    /// Drop finalized tables the justification never mentions.
    pub post_filter: bool,
    /// Skip decomposition and use these constraints.
    pub constraints: Option<ConstraintSet>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_BUDGET,
            ablation: Ablation::Full,
            params: SearchParams::default(),
            post_filter: false,
            constraints: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("task is empty")]
    EmptyTask,
    #[error("step budget must be at least 1")]
    ZeroBudget,
}

/// Tables whose id or name occurs in the justification, case-insensitively.
pub fn post_filter(tables: &[String], justification: &str, catalog: &CatalogStore) -> Vec<String> {
    let text = justification.to_lowercase();
    tables
        .iter()
        .filter(|id| {
            text.contains(&id.to_lowercase())
                || catalog
                    .get(id)
                    .is_some_and(|e| text.contains(&e.name.to_lowercase()))
        })
        .cloned()
        .collect()
}

/// Up to three catalog ids closest to `name` by edit distance.
pub fn near_matches(catalog: &CatalogStore, name: &str) -> Vec<String> {
    let needle = name.to_lowercase();
    let mut scored: Vec<(usize, &str)> = catalog
        .ids()
        .map(|id| (strsim::levenshtein(&needle, &id.to_lowercase()), id))
        .collect();
    scored.sort();
    scored
        .into_iter()
        .take(3)
        .map(|(_, id)| id.to_string())
        .collect()
}

enum Outcome {
    Act(AgentAction),
    Fail(String),
}

fn execute(
    ctx: &SessionContext<'_>,
    opts: &SessionOptions,
    session: &mut SearchSession,
    call: &AgentAction,
) -> String {
    match call {
        AgentAction::Search { query } => {
            let render = |id: &str| render_block(ctx.descriptors, id, opts.ablation.attached());
            match search(
                ctx.index,
                ctx.embedder,
                session,
                query,
                &opts.params,
                &render,
            ) {
                Ok(r) if r.rendered.is_empty() => "No tables matched the query.".into(),
                Ok(r) => r.rendered,
                Err(e) => format!("error: {e}"),
            }
        }
        AgentAction::Tool(ToolCall::ColumnProfiler { table, column }) => {
            match tools::column_profiler(ctx.catalog, table, column) {
                Ok(p) => {
                    let id = ctx
                        .catalog
                        .resolve(table)
                        .map_or(table.as_str(), |e| e.table_id.as_str());
                    render_profile(id, &p)
                }
                Err(e) => format!("error: {e}"),
            }
        }
        AgentAction::Tool(ToolCall::DataFinder {
            table,
            value,
            column,
        }) => match tools::data_finder(ctx.catalog, table, value, column.as_deref()) {
            Ok(r) => r.render(),
            Err(e) => format!("error: {e}"),
        },
        AgentAction::Tool(ToolCall::JoinabilityCheck { left, right }) => {
            match tools::joinability_check(ctx.catalog, left, right) {
                Ok(r) => r.render(),
                Err(e) => format!("error: {e}"),
            }
        }
        AgentAction::Finalize { .. } => unreachable!("finalize is handled by the loop"),
    }
}

/// Runs one selection session to completion. The loop asks the policy for an
/// action, executes it and records the observation until the policy
/// finalizes, the budget runs out or the policy keeps producing unusable
/// replies.
pub fn run_session(
    task: &str,
    ctx: &SessionContext<'_>,
    policy: &mut dyn Policy,
    opts: &SessionOptions,
) -> Result<SelectionResult, AgentError> {
    if task.trim().is_empty() {
        return Err(AgentError::EmptyTask);
    }
    if opts.max_steps == 0 {
        return Err(AgentError::ZeroBudget);
    }
    let constraints = opts
        .constraints
        .clone()
        .unwrap_or_else(|| decompose(task, ctx.generator));
    let mut session = SearchSession::new(format!("{:016x}", fnv1a64(task.as_bytes())));
    let mut transcript: Vec<TranscriptStep> = Vec::new();
    // Tables the policy inspected with tools, in first-seen order.
    let mut candidates: Vec<String> = Vec::new();

    let finish =
        |transcript: Vec<TranscriptStep>, tables: Vec<String>, justification: String, by, error| {
            SelectionResult {
                task: task.to_string(),
                constraints: constraints.clone(),
                ablation: opts.ablation,
                tables,
                justification,
                steps: transcript.len(),
                transcript,
                terminated_by: by,
                error,
            }
        };

    while transcript.len() < opts.max_steps {
        let mut feedback: Option<String> = None;
        let mut rejected = 0usize;
        let mut id_reprompted = false;
        let outcome = loop {
            let state = PolicyState {
                task,
                constraints: &constraints,
                transcript: &transcript,
                remaining_steps: opts.max_steps - transcript.len(),
                tools_enabled: opts.ablation.tools(),
                feedback: feedback.as_deref(),
            };
            let reply = match policy.next_action(&state) {
                Ok(r) => r,
                Err(e) => break Outcome::Fail(format!("policy failed: {e}")),
            };
            let parsed = parse_action(&reply).and_then(|a| match &a {
                AgentAction::Tool(call) if !opts.ablation.tools() => Err(ParseError::UnknownTool {
                    tool: format!("{} (tools are disabled in this run)", call.name()),
                    line: a.to_string(),
                }),
                _ => Ok(a),
            });
            let action = match parsed {
                Ok(a) => a,
                Err(e) => {
                    rejected += 1;
                    if rejected > MAX_REPROMPTS {
                        break Outcome::Fail(format!("unparseable policy output: {e}"));
                    }
                    feedback = Some(e.to_string());
                    continue;
                }
            };
            if let AgentAction::Finalize {
                tables,
                justification,
            } = &action
            {
                let unknown: Vec<&String> = tables
                    .iter()
                    .filter(|t| ctx.catalog.resolve(t).is_none())
                    .collect();
                if !unknown.is_empty() && !id_reprompted {
                    id_reprompted = true;
                    let hints: Vec<String> = unknown
                        .iter()
                        .map(|u| {
                            format!(
                                "{u} (did you mean: {})",
                                near_matches(ctx.catalog, u).join(", ")
                            )
                        })
                        .collect();
                    feedback = Some(format!("unknown table ids: {}", hints.join("; ")));
                    continue;
                }
                if !unknown.is_empty() {
                    log::warn!("dropping unknown table ids from final selection: {unknown:?}");
                }
                let mut seen = BTreeSet::new();
                let resolved: Vec<String> = tables
                    .iter()
                    .filter_map(|t| ctx.catalog.resolve(t))
                    .map(|e| e.table_id.clone())
                    .filter(|id| seen.insert(id.clone()))
                    .collect();
                break Outcome::Act(AgentAction::Finalize {
                    tables: resolved,
                    justification: justification.clone(),
                });
            }
            break Outcome::Act(action);
        };

        let action = match outcome {
            Outcome::Act(a) => a,
            Outcome::Fail(msg) => {
                log::warn!("session ended: {msg}");
                return Ok(finish(
                    transcript,
                    Vec::new(),
                    String::new(),
                    TerminatedBy::PolicyError,
                    Some(msg),
                ));
            }
        };
        let step = transcript.len() + 1;
        if let AgentAction::Finalize {
            tables,
            justification,
        } = &action
        {
            let observation = if tables.is_empty() {
                "Finalized with no tables.".to_string()
            } else {
                format!("Finalized {} tables: {}", tables.len(), tables.join(", "))
            };
            let selected = if opts.post_filter {
                post_filter(tables, justification, ctx.catalog)
            } else {
                tables.clone()
            };
            let justification = justification.clone();
            transcript.push(TranscriptStep {
                step,
                action,
                observation,
            });
            return Ok(finish(
                transcript,
                selected,
                justification,
                TerminatedBy::Finalize,
                None,
            ));
        }
        if let AgentAction::Tool(call) = &action {
            for t in call.tables() {
                if let Some(e) = ctx.catalog.resolve(t) {
                    if !candidates.contains(&e.table_id) {
                        candidates.push(e.table_id.clone());
                    }
                }
            }
        }
        let observation = execute(ctx, opts, &mut session, &action);
        transcript.push(TranscriptStep {
            step,
            action,
            observation,
        });
    }
    Ok(finish(
        transcript,
        candidates,
        String::new(),
        TerminatedBy::StepBudget,
        None,
    ))
}
