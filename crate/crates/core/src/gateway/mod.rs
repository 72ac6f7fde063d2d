//! Single chokepoint for model access.
//!
//! Every completion and embedding goes through [`Gateway`], which renders the
//! prompt template, enforces the context-window guard, caps in-flight calls,
//! retries transient failures, and unit-normalizes embeddings.

mod openai;
mod stub;
mod template;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;

pub use openai::OpenAiProvider;
pub use stub::{FnProvider, StubProvider, STUB_EMBEDDING_DIM};
pub use template::{render_str, render_template, TemplateId};

/// Default context window, in estimated tokens.
pub const DEFAULT_CONTEXT_WINDOW: usize = 8192;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("template variable `{0}` is not bound")]
    MissingVariable(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("prompt needs ~{estimated} tokens but the window is {window}")]
    ContextOverflow { estimated: usize, window: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider returned an invalid embedding: {0}")]
    InvalidEmbedding(String),
}

/// Failure reported by a provider for a single attempt.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("rate limited")]
    RateLimited,
    #[error("{0}")]
    Fatal(String),
}

/// Chars/4, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template_id: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(template_id: TemplateId) -> Self {
        CompletionRequest {
            template_id,
            variables: BTreeMap::new(),
            max_output_tokens: template_id.default_max_output_tokens(),
            temperature: template_id.default_temperature(),
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.variables.get(name).map(String::as_str)
    }

    pub fn render(&self) -> Result<String, GatewayError> {
        render_template(self.template_id, &self.variables)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc + a * b)
    }
}

pub trait CompletionProvider: Send + Sync {
    /// `prompt` is the rendered template; `request` carries the raw bindings.
    fn complete(&self, request: &CompletionRequest, prompt: &str) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub embedding_model: String,
    #[serde(skip_serializing, default)]
    pub api_key: String,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key: String::new(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::InvalidRequest("timeout must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("endpoint is empty".into()));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs.is_finite() && secs >= 0.0) {
            return Err(serde::de::Error::custom("timeout must be a nonnegative number of seconds"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayPolicy {
    pub context_window: usize,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub concurrency: usize,
    pub embed_batch: usize,
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        GatewayPolicy {
            context_window: DEFAULT_CONTEXT_WINDOW,
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
            concurrency: 4,
            embed_batch: 64,
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock();
        while *n == 0 {
            self.cv.wait(&mut n);
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

struct Inner {
    completion: Arc<dyn CompletionProvider>,
    embedding: Arc<dyn EmbeddingProvider>,
    policy: GatewayPolicy,
    permits: Semaphore,
    exec: ExecMode,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("policy", &self.inner.policy).finish()
    }
}

impl Gateway {
    pub fn new(
        completion: Arc<dyn CompletionProvider>,
        embedding: Arc<dyn EmbeddingProvider>,
        policy: GatewayPolicy,
    ) -> Self {
        Gateway {
            inner: Arc::new(Inner {
                permits: Semaphore::new(policy.concurrency),
                completion,
                embedding,
                policy,
                exec: ExecMode::default(),
            }),
        }
    }

    /// Offline gateway backed by [`StubProvider`] for both routes.
    pub fn stub() -> Self {
        let stub = Arc::new(StubProvider::new());
        Gateway::new(
            stub.clone(),
            stub,
            GatewayPolicy {
                backoff_base: Duration::ZERO,
                ..GatewayPolicy::default()
            },
        )
    }

    pub fn with_exec(self, exec: ExecMode) -> Self {
        let inner = &self.inner;
        Gateway {
            inner: Arc::new(Inner {
                completion: inner.completion.clone(),
                embedding: inner.embedding.clone(),
                policy: inner.policy.clone(),
                permits: Semaphore::new(inner.policy.concurrency),
                exec,
            }),
        }
    }

    pub fn policy(&self) -> &GatewayPolicy {
        &self.inner.policy
    }

    pub fn exec(&self) -> ExecMode {
        self.inner.exec
    }

    /// Renders the request and rejects it if prompt plus output budget would
    /// exceed the context window. Performs no provider call.
    pub fn prepare(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                request.temperature
            )));
        }
        let prompt = request.render()?;
        let estimated = estimate_tokens(&prompt) + request.max_output_tokens as usize;
        let window = self.inner.policy.context_window;
        if estimated > window {
            return Err(GatewayError::ContextOverflow { estimated, window });
        }
        Ok(prompt)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        let prompt = self.prepare(request)?;
        let (text, attempts) = self.with_retries(|| {
            let _permit = self.inner.permits.acquire();
            let text = self.inner.completion.complete(request, &prompt)?;
            if text.trim().is_empty() {
                return Err(ProviderError::Transient("empty completion".into()));
            }
            Ok(text)
        })?;
        Ok(Completion {
            usage: Usage {
                prompt_tokens: estimate_tokens(&prompt),
                completion_tokens: estimate_tokens(&text),
            },
            text,
            attempts,
        })
    }

    /// Completes independent requests concurrently; results keep input order.
    pub fn complete_many(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<Completion, GatewayError>> {
        self.inner.exec.map(requests, |r| self.complete(r))
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::EmptyInput);
        }
        let batches: Vec<&[String]> = texts.chunks(self.inner.policy.embed_batch.max(1)).collect();
        let results = self.inner.exec.map(&batches, |batch| {
            self.with_retries(|| {
                let _permit = self.inner.permits.acquire();
                self.inner.embedding.embed(batch)
            })
            .map(|(v, _)| v)
        });

        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for (batch, result) in batches.iter().zip(results) {
            let vectors = result?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::InvalidEmbedding(format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    vectors.len()
                )));
            }
            for v in vectors {
                if *dim.get_or_insert(v.len()) != v.len() || v.is_empty() {
                    return Err(GatewayError::InvalidEmbedding("non-uniform dimension".into()));
                }
                out.push(normalize(v)?);
            }
        }
        Ok(out)
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<(T, u32), GatewayError> {
        let max_retries = self.inner.policy.max_retries;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok((v, attempt)),
                Err(ProviderError::Fatal(msg)) => return Err(GatewayError::ProviderUnavailable(msg)),
                Err(e) if attempt > max_retries => {
                    return Err(match e {
                        ProviderError::RateLimited => GatewayError::RateLimited { attempts: attempt },
                        other => GatewayError::ProviderUnavailable(other.to_string()),
                    })
                }
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "retrying provider call");
                    self.backoff(attempt);
                }
            }
        }
    }

    fn backoff(&self, attempt: u32) {
        let base = self.inner.policy.backoff_base;
        if base.is_zero() {
            return;
        }
        let exp = base.saturating_mul(1u32 << (attempt - 1).min(10));
        let jitter = rand::thread_rng().gen_range(0.0..0.5);
        std::thread::sleep(exp.mul_f64(1.0 + jitter));
    }
}

fn normalize(values: Vec<f64>) -> Result<EmbeddingVector, GatewayError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GatewayError::InvalidEmbedding("non-finite component".into()));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(GatewayError::InvalidEmbedding("zero vector".into()));
    }
    Ok(EmbeddingVector::new(values.into_iter().map(|v| v / norm).collect()))
}
