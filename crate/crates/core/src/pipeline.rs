//! The end-to-end build: corpus in, personas and retrieval index out.

use serde::{Deserialize, Serialize};

use crate::cluster::{annotate_comments, run_clustering, AnnotatedComment, ClusterConfig, ClusterResult, DEFAULT_BATCH_SIZE};
use crate::corpus::{select_comments, ChannelCorpus, CommentSelection, DEFAULT_GLOBAL_POOL, DEFAULT_PER_VIDEO_SUPPLEMENT};
use crate::dialogue::{build_index, SummaryIndex};
use crate::distill::{digest_corpus, extract_dimension_values, DimensionValueSet, VideoDigest};
use crate::flags::Flag;
use crate::gateway::Gateway;
use crate::persona::{generate_personas, PersonaProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Ingest,
    Summarize,
    Dimval,
    Annotate,
    Cluster,
    Personas,
    Index,
    Done,
    Failed,
}

impl Stage {
    pub const RUN_ORDER: [Stage; 7] = [
        Stage::Ingest,
        Stage::Summarize,
        Stage::Dimval,
        Stage::Annotate,
        Stage::Cluster,
        Stage::Personas,
        Stage::Index,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "INGEST",
            Stage::Summarize => "SUMMARIZE",
            Stage::Dimval => "DIMVAL",
            Stage::Annotate => "ANNOTATE",
            Stage::Cluster => "CLUSTER",
            Stage::Personas => "PERSONAS",
            Stage::Index => "INDEX",
            Stage::Done => "DONE",
            Stage::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        [Self::RUN_ORDER.as_slice(), &[Stage::Done, Stage::Failed]]
            .concat()
            .into_iter()
            .find(|st| st.as_str() == s)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }

    /// Fraction of the run completed when this stage starts.
    pub fn progress(self) -> f64 {
        match Self::RUN_ORDER.iter().position(|s| *s == self) {
            Some(i) => i as f64 / Self::RUN_ORDER.len() as f64,
            None => 1.0,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cluster: ClusterConfig,
    pub comment_pool: usize,
    pub per_video_supplement: usize,
    pub annotation_batch: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cluster: ClusterConfig::default(),
            comment_pool: DEFAULT_GLOBAL_POOL,
            per_video_supplement: DEFAULT_PER_VIDEO_SUPPLEMENT,
            annotation_batch: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn at(stage: Stage) -> impl FnOnce(String) -> PipelineError {
        move |message| PipelineError { stage, message }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectArtifacts {
    pub corpus: ChannelCorpus,
    pub digests: Vec<VideoDigest>,
    pub dimval: DimensionValueSet,
    pub selection: CommentSelection,
    pub annotations: Vec<AnnotatedComment>,
    pub cluster: ClusterResult,
    pub personas: Vec<PersonaProfile>,
    pub index: SummaryIndex,
    pub flags: Vec<Flag>,
}

impl ProjectArtifacts {
    /// Channel-level audience digest: the per-video observation summaries.
    pub fn observational_summary(&self) -> String {
        self.digests
            .iter()
            .filter(|d| !d.observation_summary.trim().is_empty())
            .map(|d| d.observation_summary.trim())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Runs every stage in order. `progress` is told when each stage starts.
pub fn run_pipeline(
    gw: &Gateway,
    corpus: ChannelCorpus,
    config: &PipelineConfig,
    progress: &mut dyn FnMut(Stage, f64),
) -> Result<ProjectArtifacts, PipelineError> {
    let mut flags = Vec::new();

    progress(Stage::Ingest, Stage::Ingest.progress());
    corpus.validate().map_err(|e| e.to_string()).map_err(PipelineError::at(Stage::Ingest))?;
    config
        .cluster
        .validate()
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Ingest))?;

    progress(Stage::Summarize, Stage::Summarize.progress());
    let digests = digest_corpus(gw, &corpus)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Summarize))?;
    for d in &digests {
        flags.extend(d.flags.iter().cloned());
    }

    progress(Stage::Dimval, Stage::Dimval.progress());
    let observations: Vec<String> = digests.iter().map(|d| d.observation_summary.clone()).collect();
    let extraction = extract_dimension_values(gw, &observations)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Dimval))?;
    flags.extend(extraction.flags);
    let dimval = extraction.set;

    progress(Stage::Annotate, Stage::Annotate.progress());
    let selection = select_comments(&corpus, config.comment_pool, config.per_video_supplement)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Annotate))?;
    let annotated = annotate_comments(gw, &corpus, &selection, &dimval, config.annotation_batch)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Annotate))?;
    flags.extend(annotated.flags);
    let annotations = annotated.items;

    progress(Stage::Cluster, Stage::Cluster.progress());
    let cluster = run_clustering(gw, &corpus, &selection, &annotations, &dimval, &config.cluster)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Cluster))?;

    progress(Stage::Personas, Stage::Personas.progress());
    let batch = generate_personas(gw, &corpus, &annotations, &cluster, &dimval)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Personas))?;
    flags.extend(batch.flags);
    if batch.personas.is_empty() {
        return Err(PipelineError {
            stage: Stage::Personas,
            message: "no cluster produced a valid persona".into(),
        });
    }

    progress(Stage::Index, Stage::Index.progress());
    let built = build_index(gw, &corpus, &digests)
        .map_err(|e| e.to_string())
        .map_err(PipelineError::at(Stage::Index))?;
    flags.extend(built.flags);

    progress(Stage::Done, 1.0);
    Ok(ProjectArtifacts {
        corpus,
        digests,
        dimval,
        selection,
        annotations,
        cluster,
        personas: batch.personas,
        index: built.index,
        flags,
    })
}
