//! Service configuration: a TOML file, then `FORGE_*` environment overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use forge_core::dialogue::DialogueConfig;
use forge_core::gateway::{Gateway, GatewayPolicy, OpenAiProvider, ProviderConfig, StubProvider};
use forge_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Deterministic offline provider.
    Stub,
    /// Any OpenAI-compatible HTTP endpoint.
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_name: String,
    pub embedding_model: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub timeout_secs: f64,
}

impl Default for ProviderSection {
    fn default() -> Self {
        let d = ProviderConfig::default();
        ProviderSection {
            kind: ProviderKind::Stub,
            endpoint: d.endpoint,
            model_name: d.model_name,
            embedding_model: d.embedding_model,
            api_key: String::new(),
            timeout_secs: d.timeout.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    pub concurrency: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub context_window: usize,
    pub embed_batch: usize,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let d = GatewayPolicy::default();
        GatewaySection {
            concurrency: d.concurrency,
            max_retries: d.max_retries,
            backoff_ms: d.backoff_base.as_millis() as u64,
            context_window: d.context_window,
            embed_batch: d.embed_batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
    /// When set, every `/api/v1` request needs `Authorization: Bearer <token>`.
    #[serde(skip_serializing)]
    pub token: Option<String>,
    /// Built studio assets, served at `/` when set.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            host: "127.0.0.1".into(),
            port: 8080,
            token: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub database: PathBuf,
    pub provider: ProviderSection,
    pub gateway: GatewaySection,
    pub pipeline: PipelineConfig,
    pub dialogue: DialogueConfig,
    pub server: ServerSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            database: PathBuf::from("forge.db"),
            provider: ProviderSection::default(),
            gateway: GatewaySection::default(),
            pipeline: PipelineConfig::default(),
            dialogue: DialogueConfig::default(),
            server: ServerSection::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| anyhow::anyhow!("{key}: {e}"))
}

impl Config {
    /// Reads `path` if given (missing file is an error), then applies the
    /// process environment.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Config> {
        let config: Config = toml::from_str(text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        if let Some(v) = get("FORGE_DATABASE") {
            self.database = PathBuf::from(v);
        }
        if let Some(v) = get("FORGE_PROVIDER") {
            self.provider.kind = match v.trim().to_lowercase().as_str() {
                "stub" => ProviderKind::Stub,
                "openai" => ProviderKind::Openai,
                other => bail!("FORGE_PROVIDER: unknown provider `{other}`"),
            };
        }
        if let Some(v) = get("FORGE_ENDPOINT") {
            self.provider.endpoint = v;
        }
        if let Some(v) = get("FORGE_MODEL") {
            self.provider.model_name = v;
        }
        if let Some(v) = get("FORGE_EMBEDDING_MODEL") {
            self.provider.embedding_model = v;
        }
        if let Some(v) = get("FORGE_API_KEY") {
            self.provider.api_key = v;
        }
        if let Some(v) = get("FORGE_CONCURRENCY") {
            self.gateway.concurrency = parse("FORGE_CONCURRENCY", &v)?;
        }
        if let Some(v) = get("FORGE_CONTEXT_WINDOW") {
            self.gateway.context_window = parse("FORGE_CONTEXT_WINDOW", &v)?;
        }
        if let Some(v) = get("FORGE_K_MIN") {
            self.pipeline.cluster.k_min = parse("FORGE_K_MIN", &v)?;
        }
        if let Some(v) = get("FORGE_K_MAX") {
            self.pipeline.cluster.k_max = parse("FORGE_K_MAX", &v)?;
        }
        if let Some(v) = get("FORGE_SEED") {
            self.pipeline.cluster.seed = parse("FORGE_SEED", &v)?;
        }
        if let Some(v) = get("FORGE_PORT") {
            self.server.port = parse("FORGE_PORT", &v)?;
        }
        if let Some(v) = get("FORGE_STATIC_DIR") {
            self.server.static_dir = Some(PathBuf::from(v)).filter(|p| !p.as_os_str().is_empty());
        }
        if let Some(v) = get("FORGE_TOKEN") {
            self.server.token = Some(v).filter(|t| !t.is_empty());
        }
        self.validate()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.pipeline.cluster.validate()?;
        if self.gateway.concurrency == 0 {
            bail!("gateway.concurrency must be at least 1");
        }
        if self.provider.kind == ProviderKind::Openai {
            self.provider_config().validate()?;
        }
        if self.dialogue.retrieval_depth == 0 {
            bail!("dialogue.retrieval_depth must be at least 1");
        }
        Ok(())
    }

    pub fn provider_config(&self) -> ProviderConfig {
        ProviderConfig {
            endpoint: self.provider.endpoint.clone(),
            model_name: self.provider.model_name.clone(),
            embedding_model: self.provider.embedding_model.clone(),
            api_key: self.provider.api_key.clone(),
            timeout: Duration::from_secs_f64(self.provider.timeout_secs.max(0.001)),
            max_retries: self.gateway.max_retries,
        }
    }

    pub fn policy(&self) -> GatewayPolicy {
        GatewayPolicy {
            context_window: self.gateway.context_window,
            max_retries: self.gateway.max_retries,
            backoff_base: Duration::from_millis(self.gateway.backoff_ms),
            concurrency: self.gateway.concurrency,
            embed_batch: self.gateway.embed_batch,
        }
    }

    pub fn gateway(&self) -> Gateway {
        match self.provider.kind {
            ProviderKind::Stub => {
                let stub = Arc::new(StubProvider::new());
                Gateway::new(stub.clone(), stub, self.policy())
            }
            ProviderKind::Openai => {
                let p = Arc::new(OpenAiProvider::new(self.provider_config()));
                Gateway::new(p.clone(), p, self.policy())
            }
        }
    }
}
