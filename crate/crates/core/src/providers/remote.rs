use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    Embedder, EmbeddingVector, GenerationRequest, ProviderError, TextGenerator, ENV_EMBED_ENDPOINT,
    ENV_EMBED_KEY, ENV_LLM_ENDPOINT, ENV_LLM_KEY,
};

/// Attempt count and the pause after each failed attempt.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(attempts: usize) -> Self {
        Self {
            attempts,
            backoff: Vec::new(),
        }
    }

    fn run<T>(&self, mut call: impl FnMut() -> Result<T, String>) -> Result<T, ProviderError> {
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("provider call failed (attempt {}/{attempts}): {e}", i + 1);
                    last = e;
                }
            }
            if i + 1 < attempts {
                if let Some(d) = self.backoff.get(i) {
                    std::thread::sleep(*d);
                }
            }
        }
        Err(ProviderError::ProviderUnavailable(format!(
            "{last} (after {attempts} attempts)"
        )))
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    endpoint: &str,
    key: Option<&str>,
    body: &B,
) -> Result<R, String> {
    let mut req = agent
        .post(endpoint)
        .header("Content-Type", "application/json");
    if let Some(k) = key {
        req = req.header("Authorization", &format!("Bearer {k}"));
    }
    let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    if status >= 400 {
        return Err(format!("HTTP {status} from {endpoint}"));
    }
    resp.body_mut()
        .read_json::<R>()
        .map_err(|e| format!("malformed response from {endpoint}: {e}"))
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedReply {
    vector: Vec<f64>,
}

/// Generation over a minimal JSON POST: `{"prompt","max_tokens","temperature"}`
/// answered by `{"text"}`.
pub struct HttpGenerator {
    endpoint: String,
    key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            retry: RetryPolicy::default(),
            agent: agent(Duration::from_secs(120)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_LLM_ENDPOINT).ok()?;
        Some(Self::new(endpoint, std::env::var(ENV_LLM_KEY).ok()))
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let body = GenerateBody {
            prompt: &req.prompt,
            max_tokens: req.max_output_tokens,
            temperature: req.temperature,
        };
        self.retry
            .run(|| {
                post_json::<_, GenerateReply>(
                    &self.agent,
                    &self.endpoint,
                    self.key.as_deref(),
                    &body,
                )
            })
            .map(|r| r.text)
    }
}

/// Embeddings over `{"input"}` answered by `{"vector"}`; vectors are
/// L2-normalized and must match the configured dimension.
pub struct HttpEmbedder {
    endpoint: String,
    key: Option<String>,
    dims: usize,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, key: Option<String>, dims: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            dims,
            retry: RetryPolicy::default(),
            agent: agent(Duration::from_secs(60)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn from_env(dims: usize) -> Option<Self> {
        let endpoint = std::env::var(ENV_EMBED_ENDPOINT).ok()?;
        Some(Self::new(endpoint, std::env::var(ENV_EMBED_KEY).ok(), dims))
    }
}

impl Embedder for HttpEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let body = EmbedBody { input: text };
        let reply = self.retry.run(|| {
            post_json::<_, EmbedReply>(&self.agent, &self.endpoint, self.key.as_deref(), &body)
        })?;
        if reply.vector.len() != self.dims {
            return Err(ProviderError::ProviderUnavailable(format!(
                "embedding has {} dims, expected {}",
                reply.vector.len(),
                self.dims
            )));
        }
        EmbeddingVector::normalized(reply.vector)
            .ok_or_else(|| ProviderError::ProviderUnavailable("zero embedding vector".into()))
    }
}
