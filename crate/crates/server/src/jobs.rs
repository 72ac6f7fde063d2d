//! Pipeline jobs run on their own thread and report progress to the store.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::thread::JoinHandle;

use forge_core::cluster::ClusterConfig;
use forge_core::corpus::ChannelCorpus;
use forge_core::pipeline::{run_pipeline, PipelineConfig, Stage};

use crate::error::ApiError;
use crate::state::{new_id, AppState};
use crate::store::PipelineJob;

/// Registers a job and starts it. Fails with a conflict if the project
/// already has one running.
pub fn start_pipeline(
    state: &AppState,
    project_id: &str,
    cluster: Option<ClusterConfig>,
) -> Result<(PipelineJob, JoinHandle<()>), ApiError> {
    let config = PipelineConfig {
        cluster: cluster.unwrap_or_else(|| state.config().pipeline.cluster.clone()),
        ..state.config().pipeline.clone()
    };
    config
        .cluster
        .validate()
        .map_err(|e| ApiError::Validation(e.to_string()))?;
    let job_id = new_id("job");
    let config_json = serde_json::to_string(&config).map_err(|e| ApiError::Internal(e.to_string()))?;
    let job = state.store().create_job(&job_id, project_id, &config_json)?;
    let state = state.clone();
    let project_id = project_id.to_string();
    let handle = std::thread::Builder::new()
        .name(format!("pipeline-{job_id}"))
        .spawn(move || {
            let outcome = catch_unwind(AssertUnwindSafe(|| execute(&state, &job_id, &project_id, &config)));
            let error = match outcome {
                Ok(Ok(())) => return,
                Ok(Err(e)) => e,
                Err(_) => "pipeline thread panicked".to_string(),
            };
            tracing::warn!(job = %job_id, %error, "pipeline job failed");
            if let Err(e) = state.store().fail_job(&job_id, &error) {
                tracing::error!(job = %job_id, error = %e, "could not record job failure");
            }
        })
        .map_err(|e| ApiError::Internal(format!("spawning job thread: {e}")))?;
    Ok((job, handle))
}

fn execute(state: &AppState, job_id: &str, project_id: &str, config: &PipelineConfig) -> Result<(), String> {
    let store = state.store();
    let corpus_json = store.corpus_json(project_id).map_err(|e| format!("INGEST: {e}"))?;
    let corpus = ChannelCorpus::from_json_str(&corpus_json).map_err(|e| format!("INGEST: {e}"))?;
    let mut progress = |stage: Stage, fraction: f64| {
        if stage.is_terminal() {
            return;
        }
        tracing::info!(job = %job_id, %stage, "pipeline stage");
        if let Err(e) = store.set_job_stage(job_id, stage, fraction) {
            tracing::error!(job = %job_id, error = %e, "could not record stage");
        }
    };
    let mut artifacts =
        run_pipeline(state.gateway(), corpus, config, &mut progress).map_err(|e| format!("{}: {}", e.stage, e.message))?;
    for p in &mut artifacts.personas {
        p.persona_id = new_id("persona");
    }
    store
        .complete_job(job_id, project_id, &artifacts)
        .map_err(|e| format!("PERSIST: {e}"))?;
    state.set_artifacts(project_id, artifacts);
    Ok(())
}
