//! Advisory conditions recorded alongside results. None of these abort a run.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    EmptyTranscript { video_id: String },
    TranscriptChunked { video_id: String, chunks: usize },
    SummaryOverLength { video_id: String, estimated_tokens: usize, limit: usize },
    NoComments { video_id: String },
    CommentsTruncated { video_id: String, kept: usize, total: usize },
    ObservationLength { video_id: String, estimated_tokens: usize },
    ManyDimensions { count: usize },
    ExtractionChunked { chunks: usize },
    AnnotationFallback { comment_id: String, reason: String },
    UnknownValue { comment_id: String, dimension: String, label: String },
    PersonaFailed { cluster: usize, reason: String },
    EmptySummaryExcluded { video_id: String },
    HistoryTruncated { dropped: usize },
    LengthExceeded { words: usize, limit: usize },
    PersonaReplyFailed { persona_id: String, reason: String },
}
