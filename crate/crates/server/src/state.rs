use std::collections::HashMap;
use std::sync::Arc;

use forge_core::gateway::Gateway;
use forge_core::pipeline::ProjectArtifacts;
use parking_lot::{Mutex, RwLock};

use crate::config::Config;
use crate::error::ApiError;
use crate::store::Store;

/// Everything request handlers and job threads share.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    gateway: Gateway,
    config: Config,
    artifacts: RwLock<HashMap<String, Arc<ProjectArtifacts>>>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

pub fn new_id(prefix: &str) -> String {
    format!("{prefix}_{}", uuid::Uuid::new_v4().simple())
}

impl AppState {
    /// Opens the store and fails any job a previous process left running.
    pub fn open(config: Config, gateway: Gateway) -> Result<AppState, ApiError> {
        let store = Store::open(&config.database)?;
        let interrupted = store.fail_interrupted_jobs()?;
        if interrupted > 0 {
            tracing::warn!(count = interrupted, "marked interrupted pipeline jobs as failed");
        }
        Ok(AppState {
            inner: Arc::new(Inner {
                store,
                gateway,
                config,
                artifacts: RwLock::new(HashMap::new()),
                session_locks: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.inner.gateway
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    /// Finished-run artifacts, loaded from the store on first use.
    pub fn artifacts(&self, project_id: &str) -> Result<Arc<ProjectArtifacts>, ApiError> {
        if let Some(a) = self.inner.artifacts.read().get(project_id) {
            return Ok(a.clone());
        }
        let loaded = self
            .store()
            .artifacts(project_id)?
            .ok_or_else(|| ApiError::PipelineNotDone(project_id.to_string()))?;
        let loaded = Arc::new(loaded);
        self.inner.artifacts.write().insert(project_id.to_string(), loaded.clone());
        Ok(loaded)
    }

    pub fn set_artifacts(&self, project_id: &str, artifacts: ProjectArtifacts) {
        self.inner.artifacts.write().insert(project_id.to_string(), Arc::new(artifacts));
    }

    /// Lock serializing turns within one session.
    pub fn session_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        self.inner
            .session_locks
            .lock()
            .entry(session_id.to_string())
            .or_default()
            .clone()
    }
}
