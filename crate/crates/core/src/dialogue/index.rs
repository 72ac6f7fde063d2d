//! Exact cosine index over per-video transcript summaries.

use serde::{Deserialize, Serialize};

use crate::corpus::ChannelCorpus;
use crate::distill::VideoDigest;
use crate::exec::ExecMode;
use crate::flags::Flag;
use crate::gateway::{EmbeddingVector, Gateway};

use super::DialogueError;

pub const DEFAULT_RETRIEVAL_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub title: String,
    pub summary: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryIndex {
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub video_id: String,
    pub title: String,
    pub summary: String,
    pub score: f64,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

impl SummaryIndex {
    /// Entries in corpus order; all vectors must share one dimension.
    pub fn from_entries(entries: Vec<IndexEntry>) -> Result<Self, DialogueError> {
        let Some(first) = entries.first() else {
            return Err(DialogueError::EmptyIndex);
        };
        let dim = first.vector.dimension();
        if let Some(bad) = entries.iter().find(|e| e.vector.dimension() != dim) {
            return Err(DialogueError::InvalidIndex(format!(
                "`{}` has dimension {}, expected {dim}",
                bad.video_id,
                bad.vector.dimension()
            )));
        }
        Ok(SummaryIndex { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.entries[0].vector.dimension()
    }

    /// Top-`m` entries by cosine similarity, descending; equal scores keep
    /// index (corpus) order.
    pub fn search(&self, query: &[f64], m: usize, exec: ExecMode) -> Vec<Retrieved> {
        let scores = exec.map(&self.entries, |e| cosine(query, &e.vector.values));
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        order
            .into_iter()
            .take(m)
            .map(|i| {
                let e = &self.entries[i];
                Retrieved {
                    video_id: e.video_id.clone(),
                    title: e.title.clone(),
                    summary: e.summary.clone(),
                    score: scores[i],
                }
            })
            .collect()
    }

    /// Embeds `query` and searches.
    pub fn retrieve(&self, gw: &Gateway, query: &str, m: usize) -> Result<Vec<Retrieved>, DialogueError> {
        if m == 0 {
            return Err(DialogueError::InvalidRequest("retrieval depth must be at least 1".into()));
        }
        let q = gw.embed(&[query.to_string()])?.remove(0);
        Ok(self.search(&q.values, m, gw.exec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexBuild {
    pub index: SummaryIndex,
    pub flags: Vec<Flag>,
}

/// Embeds every nonempty transcript summary. Videos with an empty summary
/// are left out and flagged.
pub fn build_index(gw: &Gateway, corpus: &ChannelCorpus, digests: &[VideoDigest]) -> Result<IndexBuild, DialogueError> {
    let mut flags = Vec::new();
    let mut kept: Vec<(&VideoDigest, String)> = Vec::new();
    for d in digests {
        if d.transcript_summary.trim().is_empty() {
            flags.push(Flag::EmptySummaryExcluded {
                video_id: d.video_id.clone(),
            });
            continue;
        }
        let title = corpus.video(&d.video_id).map(|v| v.title.clone()).unwrap_or_default();
        kept.push((d, title));
    }
    if kept.is_empty() {
        return Err(DialogueError::EmptyIndex);
    }
    kept.sort_by_key(|(d, _)| corpus.video_position(&d.video_id).unwrap_or(usize::MAX));
    let texts: Vec<String> = kept.iter().map(|(d, _)| d.transcript_summary.clone()).collect();
    let vectors = gw.embed(&texts)?;
    let entries = kept
        .into_iter()
        .zip(vectors)
        .map(|((d, title), vector)| IndexEntry {
            video_id: d.video_id.clone(),
            title,
            summary: d.transcript_summary.clone(),
            vector,
        })
        .collect();
    Ok(IndexBuild {
        index: SummaryIndex::from_entries(entries)?,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{corpus, video};

    fn digest(id: &str, summary: &str) -> VideoDigest {
        VideoDigest {
            video_id: id.into(),
            transcript_summary: summary.into(),
            observation_summary: String::new(),
            flags: vec![],
        }
    }

    fn entry(id: &str, v: Vec<f64>) -> IndexEntry {
        IndexEntry {
            video_id: id.into(),
            title: id.into(),
            summary: id.into(),
            vector: EmbeddingVector::new(v),
        }
    }

    #[test]
    fn empty_summary_excluded() {
        let c = corpus(vec![video("v1", vec![]), video("v2", vec![])]);
        let b = build_index(&Gateway::stub(), &c, &[digest("v1", "pruning roses"), digest("v2", "  ")]).unwrap();
        assert_eq!(b.index.len(), 1);
        assert_eq!(b.flags, vec![Flag::EmptySummaryExcluded { video_id: "v2".into() }]);
        assert!(matches!(
            build_index(&Gateway::stub(), &c, &[digest("v2", "")]),
            Err(DialogueError::EmptyIndex)
        ));
    }

    #[test]
    fn twenty_videos_uniform_dims() {
        let videos: Vec<_> = (0..20).map(|i| video(&format!("v{i:02}"), vec![])).collect();
        let c = corpus(videos);
        let digests: Vec<_> = (0..20).map(|i| digest(&format!("v{i:02}"), &format!("summary {i}"))).collect();
        let idx = build_index(&Gateway::stub(), &c, &digests).unwrap().index;
        assert_eq!(idx.len(), 20);
        assert!(idx.entries().iter().all(|e| e.vector.dimension() == idx.dimension()));
    }

    #[test]
    fn self_query_scores_one() {
        let c = corpus(vec![video("v1", vec![]), video("v2", vec![])]);
        let gw = Gateway::stub();
        let idx = build_index(&gw, &c, &[digest("v1", "compost basics"), digest("v2", "balcony tomatoes")])
            .unwrap()
            .index;
        let top = idx.retrieve(&gw, "balcony tomatoes", 1).unwrap();
        assert_eq!(top[0].video_id, "v2");
        assert!((top[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_scores_zero_and_ties_keep_order() {
        let idx = SummaryIndex::from_entries(vec![
            entry("a", vec![0.0, 1.0]),
            entry("b", vec![1.0, 0.0]),
            entry("c", vec![2.0, 0.0]),
        ])
        .unwrap();
        let r = idx.search(&[1.0, 0.0], 3, ExecMode::Sequential);
        let ids: Vec<&str> = r.iter().map(|x| x.video_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c", "a"]);
        assert_eq!(r[2].score, 0.0);
    }

    #[test]
    fn ragged_vectors_rejected() {
        assert!(matches!(
            SummaryIndex::from_entries(vec![entry("a", vec![1.0]), entry("b", vec![1.0, 0.0])]),
            Err(DialogueError::InvalidIndex(_))
        ));
    }
}
