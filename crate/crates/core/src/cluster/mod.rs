//! Audience segmentation: annotate selected comments with trait values,
//! embed them (optionally prefixed with their traits), and partition them
//! with k-means at an elbow-selected k.

mod annotate;
pub mod kmeans;
pub mod select_k;

use serde::{Deserialize, Serialize};

use crate::corpus::{ChannelCorpus, CommentSelection};
use crate::distill::{DimensionValueSet, NONE_LABEL};
use crate::exec::ExecMode;
use crate::gateway::{EmbeddingVector, Gateway, GatewayError};

pub use annotate::{annotate_comments, AnnotatedComment, Annotations, DEFAULT_BATCH_SIZE};
pub use kmeans::{kmeans, kmeans_restarts, kmeans_with, squared_distance, KMeansParams, KMeansResult};
pub use select_k::{choose_k, elbow, sweep_k, KSweep};

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("need at least {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClusterMode {
    /// Comment text prefixed with its inferred `dimension: value` pairs.
    DimvalAugmented,
    /// Comment text only.
    SemanticBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub mode: ClusterMode,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Independent k-means++ seedings per k; the lowest inertia wins.
    pub restarts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            mode: ClusterMode::DimvalAugmented,
            k_min: 2,
            k_max: 8,
            seed: 42,
            max_iterations: 100,
            tolerance: 1e-6,
            restarts: 8,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(ClusterError::InvalidConfig(format!(
                "need 2 <= k_min <= k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(ClusterError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(ClusterError::InvalidConfig("max_iterations and restarts must be positive".into()));
        }
        Ok(())
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Text that gets embedded for one comment.
///
/// Augmented mode: `"dim1: val1; dim2: val2 | <comment>"` in taxonomy order,
/// "None" entries omitted; with no traits at all, just the comment.
pub fn compose_embedding_text(
    text: &str,
    annotation: &AnnotatedComment,
    set: &DimensionValueSet,
    mode: ClusterMode,
) -> String {
    match mode {
        ClusterMode::SemanticBaseline => text.to_string(),
        ClusterMode::DimvalAugmented => {
            let prefix: Vec<String> = set
                .dimensions
                .iter()
                .filter_map(|d| {
                    let v = annotation.assignments.get(&d.name)?;
                    (v != NONE_LABEL).then(|| format!("{}: {}", d.name, v))
                })
                .collect();
            if prefix.is_empty() {
                text.trim().to_string()
            } else {
                format!("{} | {}", prefix.join("; "), text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub comment_id: String,
    pub cluster: usize,
    /// Euclidean distance to the assigned centroid.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<Assignment>,
    pub centroids: Vec<EmbeddingVector>,
    pub inertia_by_k: std::collections::BTreeMap<usize, f64>,
    pub iterations_used: usize,
    pub config: ClusterConfig,
}

impl ClusterResult {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = &Assignment> {
        self.assignments.iter().filter(move |a| a.cluster == cluster)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for a in &self.assignments {
            sizes[a.cluster] += 1;
        }
        sizes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a.cluster).collect()
    }

    pub fn to_json_report(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster result serializes")
    }
}

/// Composes texts, embeds them, sweeps k, and returns the partition at the
/// chosen k. `k_max` is clamped to the number of comments.
pub fn run_clustering(
    gw: &Gateway,
    corpus: &ChannelCorpus,
    selection: &CommentSelection,
    annotations: &[AnnotatedComment],
    set: &DimensionValueSet,
    config: &ClusterConfig,
) -> Result<ClusterResult, ClusterError> {
    config.validate()?;
    if annotations.len() != selection.len()
        || annotations.iter().zip(&selection.selected).any(|(a, id)| &a.comment_id != id)
    {
        return Err(ClusterError::InvalidInput("annotations do not match the selection".into()));
    }
    if annotations.len() < config.k_min {
        return Err(ClusterError::TooFewPoints {
            points: annotations.len(),
            k: config.k_min,
        });
    }
    let texts: Vec<String> = annotations
        .iter()
        .map(|a| {
            let comment = corpus
                .comment(&a.comment_id)
                .ok_or_else(|| ClusterError::InvalidInput(format!("unknown comment `{}`", a.comment_id)))?;
            let t = compose_embedding_text(&comment.text, a, set, config.mode);
            Ok(if t.trim().is_empty() { "(empty comment)".to_string() } else { t })
        })
        .collect::<Result<_, ClusterError>>()?;
    let points = gw.embed(&texts)?;
    cluster_points(&points, &selection.selected, config, gw.exec())
}

/// The k sweep and final partition over already-embedded points.
pub fn cluster_points(
    points: &[EmbeddingVector],
    ids: &[String],
    config: &ClusterConfig,
    exec: ExecMode,
) -> Result<ClusterResult, ClusterError> {
    let effective = ClusterConfig {
        k_max: config.k_max.min(points.len()),
        ..config.clone()
    };
    let mut sweep = sweep_k(points, &effective, exec)?;
    let best = sweep.runs.remove(&sweep.k).expect("sweep keeps the chosen run");
    let assignments = ids
        .iter()
        .zip(points)
        .zip(&best.assignments)
        .map(|((id, p), &c)| Assignment {
            comment_id: id.clone(),
            cluster: c,
            distance: squared_distance(&p.values, &best.centroids[c]).sqrt(),
        })
        .collect();
    Ok(ClusterResult {
        k: sweep.k,
        assignments,
        centroids: best.centroids.into_iter().map(EmbeddingVector::new).collect(),
        inertia_by_k: sweep.inertia_by_k,
        iterations_used: best.iterations,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{comment, corpus, video};
    use crate::corpus::select_comments;
    use crate::distill::fixtures::gardening;

    fn ann(pairs: &[(&str, &str)]) -> AnnotatedComment {
        let set = gardening();
        let mut a = AnnotatedComment::all_none("c1", "v1", &set);
        for (d, v) in pairs {
            a.assignments.insert(d.to_string(), v.to_string());
        }
        a
    }

    #[test]
    fn augmented_text_lists_traits_in_taxonomy_order() {
        // Insert out of order; output must follow the taxonomy.
        let a = ann(&[("Learning Style", "Visual"), ("Motivation", "Aesthetic")]);
        let text = compose_embedding_text("love the colors", &a, &gardening(), ClusterMode::DimvalAugmented);
        assert_eq!(text, "Motivation: Aesthetic; Learning Style: Visual | love the colors");
    }

    #[test]
    fn all_none_reduces_to_comment() {
        let a = ann(&[]);
        let text = compose_embedding_text(" hi there ", &a, &gardening(), ClusterMode::DimvalAugmented);
        assert_eq!(text, "hi there");
    }

    #[test]
    fn baseline_is_identity() {
        let a = ann(&[("Motivation", "Aesthetic")]);
        let raw = "  exact\tbytes 안녕 ";
        assert_eq!(compose_embedding_text(raw, &a, &gardening(), ClusterMode::SemanticBaseline), raw);
    }

    #[test]
    fn config_validation() {
        let bad = ClusterConfig {
            k_min: 1,
            ..ClusterConfig::default()
        };
        assert!(bad.validate().is_err());
        let inverted = ClusterConfig {
            k_min: 5,
            k_max: 4,
            ..ClusterConfig::default()
        };
        assert!(inverted.validate().is_err());
    }

    fn fixture(n: usize) -> (ChannelCorpus, CommentSelection) {
        let texts = ["the tomatoes grew huge", "balcony pots look pretty", "how do I compost", "watering schedule please"];
        let c = corpus(vec![video(
            "v1",
            (0..n)
                .map(|i| comment("v1", &format!("c{i:03}"), &format!("{} {}", texts[i % 4], i)))
                .collect(),
        )]);
        let sel = select_comments(&c, 200, 3).unwrap();
        (c, sel)
    }

    #[test]
    fn stub_run_is_byte_identical_and_complete() {
        let (c, sel) = fixture(200);
        let set = gardening();
        let gw = Gateway::stub();
        let anns = annotate_comments(&gw, &c, &sel, &set, DEFAULT_BATCH_SIZE).unwrap().items;
        let config = ClusterConfig::default();
        let a = run_clustering(&gw, &c, &sel, &anns, &set, &config).unwrap();
        let b = run_clustering(&gw, &c, &sel, &anns, &set, &config).unwrap();
        assert_eq!(a.to_json_report(), b.to_json_report());
        assert_eq!(a.inertia_by_k.len(), 7);
        assert_eq!(a.assignments.len(), 200);
        assert!(a.cluster_sizes().iter().all(|&s| s > 0));
        let values: Vec<f64> = a.inertia_by_k.values().copied().collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn small_selection_clamps_k_max() {
        let (c, sel) = fixture(5);
        let set = gardening();
        let gw = Gateway::stub();
        let anns = annotate_comments(&gw, &c, &sel, &set, DEFAULT_BATCH_SIZE).unwrap().items;
        let r = run_clustering(&gw, &c, &sel, &anns, &set, &ClusterConfig::default()).unwrap();
        assert_eq!(r.inertia_by_k.keys().copied().collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn mismatched_annotations_rejected() {
        let (c, sel) = fixture(10);
        let set = gardening();
        let gw = Gateway::stub();
        let mut anns = annotate_comments(&gw, &c, &sel, &set, DEFAULT_BATCH_SIZE).unwrap().items;
        anns.pop();
        assert!(matches!(
            run_clustering(&gw, &c, &sel, &anns, &set, &ClusterConfig::default()),
            Err(ClusterError::InvalidInput(_))
        ));
    }
}
