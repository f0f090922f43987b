use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, ProviderError, TextGenerator};

/// A canned response returned whenever the prompt contains `contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyedResponse {
    pub contains: String,
    pub response: String,
}

/// On-disk form of a script: either a bare JSON array of queued responses or
/// an object with `responses` and `keyed` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptFile {
    Queue(Vec<String>),
    Full {
        #[serde(default)]
        responses: Vec<String>,
        #[serde(default)]
        keyed: Vec<KeyedResponse>,
    },
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<String>,
    keyed: Vec<KeyedResponse>,
    prompts: Vec<String>,
}

/// Deterministic generator for tests and offline runs. Keyed responses win
/// over the FIFO queue; access is serialized so queue order is total.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    state: Mutex<ScriptState>,
}

impl ScriptedGenerator {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            state: Mutex::new(ScriptState {
                queue: responses.into_iter().map(Into::into).collect(),
                ..Default::default()
            }),
        }
    }

    pub fn with_keyed(self, contains: impl Into<String>, response: impl Into<String>) -> Self {
        self.lock().keyed.push(KeyedResponse {
            contains: contains.into(),
            response: response.into(),
        });
        self
    }

    pub fn from_script(script: ScriptFile) -> Self {
        let (responses, keyed) = match script {
            ScriptFile::Queue(r) => (r, Vec::new()),
            ScriptFile::Full { responses, keyed } => (responses, keyed),
        };
        Self {
            state: Mutex::new(ScriptState {
                queue: responses.into(),
                keyed,
                prompts: Vec::new(),
            }),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ProviderError::InvalidRequest(format!("cannot read script {}: {e}", path.display()))
        })?;
        let script: ScriptFile = serde_json::from_str(&text).map_err(|e| {
            ProviderError::InvalidRequest(format!("bad script {}: {e}", path.display()))
        })?;
        Ok(Self::from_script(script))
    }

    pub fn remaining(&self) -> usize {
        self.lock().queue.len()
    }

    /// Every prompt seen so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.lock().prompts.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let mut st = self.lock();
        st.prompts.push(req.prompt.clone());
        if let Some(k) = st.keyed.iter().find(|k| req.prompt.contains(&k.contains)) {
            return Ok(k.response.clone());
        }
        st.queue.pop_front().ok_or(ProviderError::ScriptExhausted)
    }
}
