//! Per-comment trait annotation.
//!
//! Comments are sent in numbered batches; the model answers one
//! `[[Dimension: Value], ...]` list per comment. Lines that cannot be read
//! are retried once, then fall back to all-"None" with a flag so the
//! clustered population always equals the selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{ChannelCorpus, CommentSelection};
use crate::distill::{DimensionValueSet, NONE_LABEL};
use crate::flags::Flag;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateId};

use super::ClusterError;

pub const DEFAULT_BATCH_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedComment {
    pub comment_id: String,
    pub source_video_id: String,
    /// Every dimension of the active taxonomy, mapped to a value label or "None".
    pub assignments: BTreeMap<String, String>,
}

impl AnnotatedComment {
    pub fn all_none(comment_id: &str, video_id: &str, set: &DimensionValueSet) -> Self {
        AnnotatedComment {
            comment_id: comment_id.to_string(),
            source_video_id: video_id.to_string(),
            assignments: set
                .dimensions
                .iter()
                .map(|d| (d.name.clone(), NONE_LABEL.to_string()))
                .collect(),
        }
    }

    /// Checks that keys match the taxonomy exactly and labels exist.
    pub fn is_consistent_with(&self, set: &DimensionValueSet) -> bool {
        self.assignments.len() == set.dimensions.len()
            && set.dimensions.iter().all(|d| match self.assignments.get(&d.name) {
                Some(label) => label == NONE_LABEL || d.value(label).is_some(),
                None => false,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    pub items: Vec<AnnotatedComment>,
    pub flags: Vec<Flag>,
}

/// One parsed output line: optional explicit 1-based index plus raw pairs.
type ParsedLine = (Option<usize>, Vec<(String, String)>);

fn strip_index(line: &str) -> (Option<usize>, &str) {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix('[') {
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && rest[digits.len()..].starts_with(']') {
            return (digits.parse().ok(), &rest[digits.len() + 1..]);
        }
    }
    let digits: String = t.chars().take_while(|c| c.is_ascii_digit()).collect();
    if !digits.is_empty() {
        let rest = &t[digits.len()..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return (digits.parse().ok(), r);
        }
    }
    (None, t)
}

fn parse_line(line: &str, set: &DimensionValueSet) -> Option<ParsedLine> {
    let (index, body) = strip_index(line);
    let cleaned: String = body
        .chars()
        .filter(|c| !matches!(c, '[' | ']' | '\'' | '"' | '{' | '}'))
        .collect();
    let pairs: Vec<(String, String)> = cleaned
        .split(',')
        .filter_map(|piece| {
            let (dim, val) = piece.split_once(':')?;
            let dim = set.find_dimension(dim.trim())?.name.clone();
            let val = val.trim().trim_end_matches('.').trim().to_string();
            Some((dim, val))
        })
        .collect();
    (!pairs.is_empty()).then_some((index, pairs))
}

/// Aligns output lines to the `n` comments of a batch. Explicit indices win;
/// otherwise lines map by position, and only when the counts agree.
pub(crate) fn parse_batch(output: &str, n: usize, set: &DimensionValueSet) -> Vec<Option<Vec<(String, String)>>> {
    let lines: Vec<ParsedLine> = output.lines().filter_map(|l| parse_line(l, set)).collect();
    let mut slots: Vec<Option<Vec<(String, String)>>> = vec![None; n];
    if lines.iter().all(|(i, _)| i.is_some()) && !lines.is_empty() {
        for (i, pairs) in lines {
            let i = i.expect("checked");
            if (1..=n).contains(&i) && slots[i - 1].is_none() {
                slots[i - 1] = Some(pairs);
            }
        }
    } else if lines.len() == n {
        for (slot, (_, pairs)) in slots.iter_mut().zip(lines) {
            *slot = Some(pairs);
        }
    }
    slots
}

/// Builds a full annotation from raw pairs, coercing unknown labels to "None".
fn resolve(
    comment_id: &str,
    video_id: &str,
    pairs: &[(String, String)],
    set: &DimensionValueSet,
    flags: &mut Vec<Flag>,
) -> AnnotatedComment {
    let mut ann = AnnotatedComment::all_none(comment_id, video_id, set);
    for (dim_name, raw) in pairs {
        let dim = set.dimension(dim_name).expect("parse_line only keeps known dimensions");
        if raw.is_empty() || raw.eq_ignore_ascii_case(NONE_LABEL) {
            continue;
        }
        match dim.canonical_label(raw) {
            Some(label) => {
                ann.assignments.insert(dim.name.clone(), label.to_string());
            }
            None => flags.push(Flag::UnknownValue {
                comment_id: comment_id.to_string(),
                dimension: dim.name.clone(),
                label: raw.clone(),
            }),
        }
    }
    ann
}

struct Item<'a> {
    comment_id: &'a str,
    video_id: &'a str,
    text: String,
}

fn classify(gw: &Gateway, set: &DimensionValueSet, batch: &[&Item]) -> Result<String, GatewayError> {
    let comments = batch
        .iter()
        .enumerate()
        .map(|(i, item)| format!("[{}] {}", i + 1, item.text))
        .collect::<Vec<_>>()
        .join("\n");
    let req = CompletionRequest::new(TemplateId::CommentClassify)
        .var("dv_set", set.to_json())
        .var("comments", comments);
    Ok(gw.complete(&req)?.text)
}

pub fn annotate_comments(
    gw: &Gateway,
    corpus: &ChannelCorpus,
    selection: &CommentSelection,
    set: &DimensionValueSet,
    batch_size: usize,
) -> Result<Annotations, ClusterError> {
    if selection.is_empty() {
        return Err(ClusterError::InvalidInput("empty selection".into()));
    }
    let items: Vec<Item> = selection
        .selected
        .iter()
        .map(|id| {
            let c = corpus
                .comment(id)
                .ok_or_else(|| ClusterError::InvalidInput(format!("unknown comment `{id}`")))?;
            Ok(Item {
                comment_id: &c.comment_id,
                video_id: &c.video_id,
                text: c.text.split_whitespace().collect::<Vec<_>>().join(" "),
            })
        })
        .collect::<Result<_, ClusterError>>()?;

    let batches: Vec<Vec<&Item>> = items.chunks(batch_size.max(1)).map(|c| c.iter().collect()).collect();
    let outputs = gw.exec().map(&batches, |batch| {
        let first = parse_batch(&classify(gw, set, batch)?, batch.len(), set);
        let missing: Vec<&Item> = batch
            .iter()
            .zip(&first)
            .filter(|(_, p)| p.is_none())
            .map(|(item, _)| *item)
            .collect();
        let retried = if missing.is_empty() {
            Vec::new()
        } else {
            parse_batch(&classify(gw, set, &missing)?, missing.len(), set)
        };
        let mut retried = retried.into_iter();
        let merged: Vec<Option<Vec<(String, String)>>> = first
            .into_iter()
            .map(|p| match p {
                Some(p) => Some(p),
                None => retried.next().flatten(),
            })
            .collect();
        Ok::<_, GatewayError>(merged)
    });

    let mut annotated = Vec::with_capacity(items.len());
    let mut flags = Vec::new();
    for (batch, parsed) in batches.iter().zip(outputs) {
        for (item, pairs) in batch.iter().zip(parsed?) {
            match pairs {
                Some(pairs) => annotated.push(resolve(item.comment_id, item.video_id, &pairs, set, &mut flags)),
                None => {
                    flags.push(Flag::AnnotationFallback {
                        comment_id: item.comment_id.to_string(),
                        reason: "unparseable classification after retry".into(),
                    });
                    annotated.push(AnnotatedComment::all_none(item.comment_id, item.video_id, set));
                }
            }
        }
    }
    Ok(Annotations { items: annotated, flags })
}
