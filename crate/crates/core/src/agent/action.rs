use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tools::ColumnRef;

pub const TOOL_NAMES: [&str; 3] = ["column_profiler", "data_finder", "joinability_check"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    ColumnProfiler {
        table: String,
        column: String,
    },
    DataFinder {
        table: String,
        value: String,
        column: Option<String>,
    },
    JoinabilityCheck {
        left: ColumnRef,
        right: ColumnRef,
    },
}

impl ToolCall {
    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::ColumnProfiler { .. } => TOOL_NAMES[0],
            ToolCall::DataFinder { .. } => TOOL_NAMES[1],
            ToolCall::JoinabilityCheck { .. } => TOOL_NAMES[2],
        }
    }

    /// Tables named in the call's arguments.
    pub fn tables(&self) -> Vec<&str> {
        match self {
            ToolCall::ColumnProfiler { table, .. } | ToolCall::DataFinder { table, .. } => {
                vec![table]
            }
            ToolCall::JoinabilityCheck { left, right } => vec![&left.table, &right.table],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentAction {
    Search {
        query: String,
    },
    Tool(ToolCall),
    Finalize {
        tables: Vec<String>,
        justification: String,
    },
}

fn quote(v: &str) -> String {
    format!("\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders an action back into its grammar line; `parse_action` inverts it.
impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentAction::Search { query } => write!(f, "ACTION search query={}", quote(query)),
            AgentAction::Tool(call) => {
                write!(f, "ACTION tool name={}", call.name())?;
                match call {
                    ToolCall::ColumnProfiler { table, column } => {
                        write!(f, " table={} column={}", quote(table), quote(column))
                    }
                    ToolCall::DataFinder {
                        table,
                        value,
                        column,
                    } => {
                        write!(f, " table={} value={}", quote(table), quote(value))?;
                        match column {
                            Some(c) => write!(f, " column={}", quote(c)),
                            None => Ok(()),
                        }
                    }
                    ToolCall::JoinabilityCheck { left, right } => {
                        write!(
                            f,
                            " left={} right={}",
                            quote(&left.to_string()),
                            quote(&right.to_string())
                        )
                    }
                }
            }
            AgentAction::Finalize {
                tables,
                justification,
            } => write!(
                f,
                "ACTION finalize tables=[{}] justification={}",
                tables.join(","),
                quote(justification)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no line starting with ACTION")]
    NoActionFound,
    #[error("unknown tool `{tool}` in: {line}")]
    UnknownTool { tool: String, line: String },
    #[error("{reason} in: {line}")]
    BadArgs { reason: String, line: String },
}

impl ParseError {
    pub fn line(&self) -> Option<&str> {
        match self {
            ParseError::NoActionFound => None,
            ParseError::UnknownTool { line, .. } | ParseError::BadArgs { line, .. } => Some(line),
        }
    }
}

#[derive(Debug, PartialEq)]
enum Value {
    Text(String),
    List(Vec<String>),
}

/// Splits `key=value` pairs. Values are bare words, double-quoted strings
/// with `\"` and `\\` escapes, or bracketed comma lists.
fn scan_args(rest: &str) -> Result<Vec<(String, Value)>, String> {
    let chars: Vec<char> = rest.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i] != '=' && !chars[i].is_whitespace() {
            i += 1;
        }
        let key: String = chars[start..i].iter().collect();
        if i >= chars.len() || chars[i] != '=' || key.is_empty() {
            return Err(format!("expected key=value near `{key}`"));
        }
        i += 1;
        let value = match chars.get(i) {
            Some('"') => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(format!("unterminated quote for `{key}`")),
                        Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                            s.push(chars[i + 1]);
                            i += 2;
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some(c) => {
                            s.push(*c);
                            i += 1;
                        }
                    }
                }
                Value::Text(s)
            }
            Some('[') => {
                let end = chars[i..]
                    .iter()
                    .position(|c| *c == ']')
                    .ok_or_else(|| format!("unterminated list for `{key}`"))?;
                let inner: String = chars[i + 1..i + end].iter().collect();
                i += end + 1;
                Value::List(
                    inner
                        .split(',')
                        .map(|s| s.trim().trim_matches('"').trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect(),
                )
            }
            _ => {
                let s = i;
                while i < chars.len() && !chars[i].is_whitespace() {
                    i += 1;
                }
                Value::Text(chars[s..i].iter().collect())
            }
        };
        out.push((key.to_ascii_lowercase(), value));
    }
    Ok(out)
}

struct Args {
    pairs: Vec<(String, Value)>,
    line: String,
}

impl Args {
    fn bad(&self, reason: impl Into<String>) -> ParseError {
        ParseError::BadArgs {
            reason: reason.into(),
            line: self.line.clone(),
        }
    }

    fn text(&self, key: &str) -> Result<Option<String>, ParseError> {
        match self.pairs.iter().find(|(k, _)| k == key) {
            None => Ok(None),
            Some((_, Value::Text(s))) => Ok(Some(s.clone())),
            Some((_, Value::List(_))) => Err(self.bad(format!("`{key}` must not be a list"))),
        }
    }

    fn required(&self, key: &str) -> Result<String, ParseError> {
        match self.text(key)? {
            Some(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            _ => Err(self.bad(format!("missing `{key}`"))),
        }
    }

    fn column_ref(&self, key: &str) -> Result<ColumnRef, ParseError> {
        ColumnRef::parse(&self.required(key)?)
            .map_err(|_| self.bad(format!("`{key}` must be table.column")))
    }
}

/// Finds the first line starting with `ACTION` and parses it.
pub fn parse_action(output: &str) -> Result<AgentAction, ParseError> {
    let line = output
        .lines()
        .map(|l| l.trim().trim_start_matches('`').trim())
        .find(|l| l.split_whitespace().next() == Some("ACTION"))
        .ok_or(ParseError::NoActionFound)?;
    let body = line["ACTION".len()..].trim_start();
    let (verb, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
    let bad = |reason: String| ParseError::BadArgs {
        reason,
        line: line.to_string(),
    };
    let args = Args {
        pairs: scan_args(rest).map_err(bad)?,
        line: line.to_string(),
    };
    match verb.to_ascii_lowercase().as_str() {
        "search" => Ok(AgentAction::Search {
            query: args.required("query")?,
        }),
        "finalize" => {
            let tables = match args.pairs.iter().find(|(k, _)| k == "tables") {
                Some((_, Value::List(l))) => l.clone(),
                Some((_, Value::Text(t))) => t
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
                None => return Err(args.bad("missing `tables`")),
            };
            Ok(AgentAction::Finalize {
                tables,
                justification: args.text("justification")?.unwrap_or_default(),
            })
        }
        "tool" => {
            let name = args.required("name")?;
            let call = match name.as_str() {
                "column_profiler" => {
                    let column = args.required("column")?;
                    match args.text("table")? {
                        Some(table) if !table.trim().is_empty() => ToolCall::ColumnProfiler {
                            table: table.trim().to_string(),
                            column,
                        },
                        _ => {
                            let r = ColumnRef::parse(&column)
                                .map_err(|_| args.bad("missing `table`"))?;
                            ToolCall::ColumnProfiler {
                                table: r.table,
                                column: r.column,
                            }
                        }
                    }
                }
                "data_finder" => ToolCall::DataFinder {
                    table: args.required("table")?,
                    value: args
                        .text("value")?
                        .ok_or_else(|| args.bad("missing `value`"))?,
                    column: args.text("column")?.filter(|c| !c.trim().is_empty()),
                },
                "joinability_check" => ToolCall::JoinabilityCheck {
                    left: args.column_ref("left")?,
                    right: args.column_ref("right")?,
                },
                other => {
                    return Err(ParseError::UnknownTool {
                        tool: other.to_string(),
                        line: line.to_string(),
                    })
                }
            };
            Ok(AgentAction::Tool(call))
        }
        other => Err(args.bad(format!("unknown action `{other}`"))),
    }
}
