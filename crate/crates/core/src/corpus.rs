//! Channel data model, corpus file loading, and comment selection.
//!
//! Corpus file schema (UTF-8 JSON, unknown keys ignored):
//!
//! ```text
//! { "channel": { "id", "name", "description", "subscriber_count" },
//!   "videos": [ { "id", "title", "description", "transcript",
//!                 "comments": [ { "id", "author_id", "text", "created_at" } ] } ] }
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GLOBAL_POOL: usize = 200;
pub const DEFAULT_PER_VIDEO_SUPPLEMENT: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus has no comments")]
    EmptyCorpus,
    #[error("invalid selection parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCorpus {
    pub channel_id: String,
    pub name: String,
    pub description: String,
    pub subscriber_count: u64,
    pub videos: Vec<Video>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Video {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub transcript: String,
    pub comments: Vec<Comment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub author_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub video_id: String,
}

impl Comment {
    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

// On-disk shapes. Kept separate from the domain types so the file schema can
// use short key names and omit the comment back-references.
#[derive(Serialize, Deserialize)]
struct CorpusFile {
    channel: ChannelFile,
    videos: Vec<VideoFile>,
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    id: String,
    name: String,
    description: String,
    subscriber_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VideoFile {
    id: String,
    title: String,
    description: String,
    transcript: String,
    comments: Vec<CommentFile>,
}

#[derive(Serialize, Deserialize)]
struct CommentFile {
    id: String,
    author_id: String,
    text: String,
    created_at: DateTime<Utc>,
}

impl ChannelCorpus {
    pub fn from_json_str(s: &str) -> Result<Self, CorpusError> {
        let s = s.strip_prefix('\u{feff}').unwrap_or(s);
        let file: CorpusFile =
            serde_json::from_str(s).map_err(|e| CorpusError::Schema(e.to_string()))?;
        let corpus = ChannelCorpus {
            channel_id: file.channel.id,
            name: file.channel.name,
            description: file.channel.description,
            subscriber_count: file.channel.subscriber_count,
            videos: file
                .videos
                .into_iter()
                .map(|v| Video {
                    comments: v
                        .comments
                        .into_iter()
                        .map(|c| Comment {
                            comment_id: c.id,
                            author_id: c.author_id,
                            text: c.text,
                            created_at: c.created_at,
                            video_id: v.id.clone(),
                        })
                        .collect(),
                    video_id: v.id,
                    title: v.title,
                    description: v.description,
                    transcript: v.transcript,
                })
                .collect(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn to_json_string(&self) -> String {
        let file = CorpusFile {
            channel: ChannelFile {
                id: self.channel_id.clone(),
                name: self.name.clone(),
                description: self.description.clone(),
                subscriber_count: self.subscriber_count,
            },
            videos: self
                .videos
                .iter()
                .map(|v| VideoFile {
                    id: v.video_id.clone(),
                    title: v.title.clone(),
                    description: v.description.clone(),
                    transcript: v.transcript.clone(),
                    comments: v
                        .comments
                        .iter()
                        .map(|c| CommentFile {
                            id: c.comment_id.clone(),
                            author_id: c.author_id.clone(),
                            text: c.text.clone(),
                            created_at: c.created_at,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("corpus serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    /// Checks every structural invariant: nonempty ids, unique video ids,
    /// corpus-wide unique comment ids, consistent back-references.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.channel_id.trim().is_empty() {
            return Err(CorpusError::Schema("channel id is empty".into()));
        }
        let mut video_ids = HashSet::new();
        let mut comment_ids = HashSet::new();
        for video in &self.videos {
            if video.video_id.trim().is_empty() {
                return Err(CorpusError::Schema("video id is empty".into()));
            }
            if !video_ids.insert(video.video_id.as_str()) {
                return Err(CorpusError::Schema(format!(
                    "duplicate video id `{}`",
                    video.video_id
                )));
            }
            for c in &video.comments {
                if c.comment_id.trim().is_empty() {
                    return Err(CorpusError::Schema(format!(
                        "empty comment id in video `{}`",
                        video.video_id
                    )));
                }
                if c.video_id != video.video_id {
                    return Err(CorpusError::Schema(format!(
                        "comment `{}` references video `{}` but is stored under `{}`",
                        c.comment_id, c.video_id, video.video_id
                    )));
                }
                if !comment_ids.insert(c.comment_id.as_str()) {
                    return Err(CorpusError::Schema(format!(
                        "duplicate comment id `{}`",
                        c.comment_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn comments(&self) -> impl Iterator<Item = &Comment> {
        self.videos.iter().flat_map(|v| v.comments.iter())
    }

    pub fn comment_count(&self) -> usize {
        self.videos.iter().map(|v| v.comments.len()).sum()
    }

    pub fn video(&self, video_id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn comment(&self, comment_id: &str) -> Option<&Comment> {
        self.comments().find(|c| c.comment_id == comment_id)
    }

    /// Position of a video in corpus order; used for tie-breaking rankings.
    pub fn video_position(&self, video_id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v.video_id == video_id)
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<ChannelCorpus, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    ChannelCorpus::from_json_str(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentSelection {
    pub selected: Vec<String>,
    pub global_pool_size: usize,
    pub per_video_supplement: usize,
}

impl CommentSelection {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Longest first; equal lengths ordered by (video_id, comment_id) ascending.
fn by_length_desc(a: &(&Comment, usize), b: &(&Comment, usize)) -> Ordering {
    b.1.cmp(&a.1)
        .then_with(|| a.0.video_id.cmp(&b.0.video_id))
        .then_with(|| a.0.comment_id.cmp(&b.0.comment_id))
}

/// Picks the `cap` longest comments corpus-wide, then appends up to
/// `supplement` longest comments from every video that has none in the pool.
pub fn select_comments(
    corpus: &ChannelCorpus,
    cap: usize,
    supplement: usize,
) -> Result<CommentSelection, CorpusError> {
    if cap == 0 {
        return Err(CorpusError::InvalidParameters("cap must be at least 1".into()));
    }
    let mut ranked: Vec<(&Comment, usize)> =
        corpus.comments().map(|c| (c, c.char_len())).collect();
    if ranked.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    ranked.sort_by(by_length_desc);

    let mut selected: Vec<String> = Vec::new();
    let mut covered: HashSet<&str> = HashSet::new();
    for (c, _) in ranked.iter().take(cap) {
        selected.push(c.comment_id.clone());
        covered.insert(c.video_id.as_str());
    }

    for video in &corpus.videos {
        if covered.contains(video.video_id.as_str()) {
            continue;
        }
        let mut own: Vec<(&Comment, usize)> =
            video.comments.iter().map(|c| (c, c.char_len())).collect();
        own.sort_by(by_length_desc);
        selected.extend(own.iter().take(supplement).map(|(c, _)| c.comment_id.clone()));
    }

    Ok(CommentSelection {
        selected,
        global_pool_size: cap,
        per_video_supplement: supplement,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn minimal_corpus_with_no_comments() {
        let json = r#"{"channel":{"id":"c1","name":"n","description":"d","subscriber_count":3},
            "videos":[{"id":"v1","title":"t","description":"","transcript":"","comments":[]}]}"#;
        let corpus = ChannelCorpus::from_json_str(json).unwrap();
        assert_eq!(corpus.comment_count(), 0);
        assert!(matches!(
            select_comments(&corpus, 200, 3),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn duplicate_video_id_is_named() {
        let json = r#"{"channel":{"id":"c1","name":"n","description":"d","subscriber_count":3},
            "videos":[{"id":"dup","title":"a","description":"","transcript":"","comments":[]},
                      {"id":"dup","title":"b","description":"","transcript":"","comments":[]}]}"#;
        match ChannelCorpus::from_json_str(json) {
            Err(CorpusError::Schema(msg)) => assert!(msg.contains("dup"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_and_unknown_keys() {
        let missing = r#"{"channel":{"id":"c1","name":"n","description":"d"},"videos":[]}"#;
        assert!(matches!(
            ChannelCorpus::from_json_str(missing),
            Err(CorpusError::Schema(m)) if m.contains("subscriber_count")
        ));
        let extra = r#"{"channel":{"id":"c1","name":"n","description":"d","subscriber_count":1,"views":9},
            "videos":[],"crawler":"x"}"#;
        assert!(ChannelCorpus::from_json_str(extra).is_ok());
    }

    #[test]
    fn duplicate_comment_ids_across_videos() {
        let c = corpus(vec![
            video("v1", vec![comment("v1", "c", "a")]),
            video("v2", vec![comment("v2", "c", "b")]),
        ]);
        assert!(matches!(c.validate(), Err(CorpusError::Schema(m)) if m.contains("`c`")));
    }

    #[test]
    fn pool_under_cap_selects_everything() {
        let c = corpus(vec![
            video("v1", vec![comment("v1", "a", "xx"), comment("v1", "b", "xxxx")]),
            video("v2", vec![comment("v2", "c", "x"), comment("v2", "d", "xxx"), comment("v2", "e", "xxxxx")]),
        ]);
        let sel = select_comments(&c, 200, 3).unwrap();
        assert_eq!(sel.selected, vec!["e", "b", "d", "a", "c"]);
    }

    #[test]
    fn uncovered_videos_get_supplements_in_video_order() {
        let c = corpus(vec![
            video("v1", vec![comment("v1", "a", "short"), comment("v1", "b", "tiny")]),
            video("v2", vec![comment("v2", "big", &"y".repeat(50))]),
            video("v3", vec![]),
        ]);
        let sel = select_comments(&c, 1, 3).unwrap();
        assert_eq!(sel.selected, vec!["big", "a", "b"]);
    }

    #[test]
    fn length_counts_scalar_values_not_bytes() {
        // 4 Hangul syllables (12 bytes) vs 5 ASCII letters.
        let c = corpus(vec![video(
            "v1",
            vec![comment("v1", "ko", "안녕하세"), comment("v1", "en", "hello")],
        )]);
        let sel = select_comments(&c, 1, 0).unwrap();
        assert_eq!(sel.selected, vec!["en"]);
    }

    #[test]
    fn ties_break_on_video_then_comment_id() {
        let c = corpus(vec![
            video("vb", vec![comment("vb", "a", "same"), comment("vb", "0", "same")]),
            video("va", vec![comment("va", "z", "same")]),
        ]);
        let sel = select_comments(&c, 3, 0).unwrap();
        assert_eq!(sel.selected, vec!["z", "0", "a"]);
    }

    #[test]
    fn zero_cap_rejected() {
        let c = corpus(vec![video("v1", vec![comment("v1", "a", "x")])]);
        assert!(matches!(
            select_comments(&c, 0, 3),
            Err(CorpusError::InvalidParameters(_))
        ));
    }

    #[test]
    fn save_then_load_round_trips() {
        let c = corpus(vec![
            video("v1", vec![comment("v1", "a", "héllo \"quoted\"")]),
            video("v2", vec![]),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        c.save(&path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
    }
}
