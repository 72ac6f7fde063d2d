//! Corpus compression and dimension/value taxonomy extraction.
//!
//! Each video gets a transcript summary and an audience observation summary;
//! the observation summaries are then distilled into a
//! [`DimensionValueSet`], which is validated before anything downstream uses
//! it.

use std::collections::HashSet;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{ChannelCorpus, Video};
use crate::flags::Flag;
use crate::gateway::{estimate_tokens, CompletionRequest, Gateway, GatewayError, TemplateId};
use crate::json;

pub const TRANSCRIPT_SUMMARY_TOKENS: usize = 500;
pub const OBSERVATION_BAND: (usize, usize) = (100, 260);
pub const MIN_VALUES_PER_DIMENSION: usize = 3;
pub const MIN_DIMENSIONS: usize = 2;
pub const DIMENSION_SOFT_CAP: usize = 8;
pub const EXTRACTION_RETRIES: usize = 2;
pub const EXCLUDED_DIMENSIONS: [&str; 2] = ["engagement level", "community interaction"];
/// Label used for "no value inferred"; reserved, never a real value.
pub const NONE_LABEL: &str = "None";

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("could not parse model output: {0}")]
    Parse(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("no observation summaries to extract from")]
    NoObservations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Value {
    #[serde(rename = "value")]
    pub label: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<Value>,
}

impl Dimension {
    pub fn value(&self, label: &str) -> Option<&Value> {
        self.values.iter().find(|v| v.label == label)
    }

    /// Case-insensitive lookup returning the canonical label.
    pub fn canonical_label(&self, label: &str) -> Option<&str> {
        let wanted = normalize(label);
        self.values
            .iter()
            .find(|v| normalize(&v.label) == wanted)
            .map(|v| v.label.as_str())
    }
}

/// Ordered trait taxonomy. Serializes as a JSON object keyed by dimension
/// name, each holding an array of `{value, definition}` objects.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DimensionValueSet {
    pub dimensions: Vec<Dimension>,
}

impl DimensionValueSet {
    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn dimension_mut(&mut self, name: &str) -> Option<&mut Dimension> {
        self.dimensions.iter_mut().find(|d| d.name == name)
    }

    /// Case-insensitive lookup returning the canonical dimension.
    pub fn find_dimension(&self, name: &str) -> Option<&Dimension> {
        let wanted = normalize(name);
        self.dimensions.iter().find(|d| normalize(&d.name) == wanted)
    }

    pub fn contains_pair(&self, dimension: &str, label: &str) -> bool {
        self.dimension(dimension).and_then(|d| d.value(label)).is_some()
    }

    pub fn value_count(&self) -> usize {
        self.dimensions.iter().map(|d| d.values.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("taxonomy serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }
}

impl Serialize for DimensionValueSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.dimensions.len()))?;
        for d in &self.dimensions {
            map.serialize_entry(&d.name, &d.values)?;
        }
        map.end()
    }
}

/// Accepts either `{value, definition}` objects or `"Label: definition"`
/// strings, the shape shown in the extraction template's example.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawValue {
    Object { value: String, definition: String },
    Text(String),
}

impl From<RawValue> for Value {
    fn from(raw: RawValue) -> Self {
        match raw {
            RawValue::Object { value, definition } => Value { label: value, definition },
            RawValue::Text(s) => match s.split_once(':') {
                Some((label, def)) => Value {
                    label: label.trim().to_string(),
                    definition: def.trim().to_string(),
                },
                None => Value {
                    label: s.trim().to_string(),
                    definition: String::new(),
                },
            },
        }
    }
}

impl<'de> Deserialize<'de> for DimensionValueSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SetVisitor;

        impl<'de> Visitor<'de> for SetVisitor {
            type Value = DimensionValueSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping dimension names to arrays of values")
            }

            // Visits entries directly so duplicate keys survive for validation.
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut dimensions = Vec::new();
                while let Some((name, values)) = map.next_entry::<String, Vec<RawValue>>()? {
                    dimensions.push(Dimension {
                        name,
                        values: values.into_iter().map(Value::from).collect(),
                    });
                }
                Ok(DimensionValueSet { dimensions })
            }
        }

        d.deserialize_map(SetVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    MinDimensions,
    EmptyName,
    DuplicateDimension,
    ExcludedDimension,
    MinValues,
    EmptyLabel,
    EmptyDefinition,
    DuplicateValue,
    ReservedLabel,
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("serializes");
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: ReasonCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("dimension set rejected: {}", summarize_issues(.issues))]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationError {
    pub fn has(&self, code: ReasonCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

fn summarize_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("{} ({})", i.code, i.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn is_excluded_dimension(name: &str) -> bool {
    let n = normalize(name);
    EXCLUDED_DIMENSIONS.iter().any(|x| n.contains(x))
}

/// Checks every taxonomy invariant and reports all violations at once.
pub fn validate_dimension_set(set: &DimensionValueSet) -> Result<(), ValidationError> {
    let mut issues = Vec::new();
    let mut push = |code, detail: String| issues.push(ValidationIssue { code, detail });

    if set.dimensions.len() < MIN_DIMENSIONS {
        push(
            ReasonCode::MinDimensions,
            format!("{} dimensions, need at least {MIN_DIMENSIONS}", set.dimensions.len()),
        );
    }
    let mut names = HashSet::new();
    for dim in &set.dimensions {
        let key = normalize(&dim.name);
        if key.is_empty() {
            push(ReasonCode::EmptyName, "dimension with empty name".into());
        } else if !names.insert(key) {
            push(ReasonCode::DuplicateDimension, dim.name.clone());
        }
        if is_excluded_dimension(&dim.name) {
            push(ReasonCode::ExcludedDimension, dim.name.clone());
        }
        if dim.values.len() < MIN_VALUES_PER_DIMENSION {
            push(
                ReasonCode::MinValues,
                format!("`{}` has {} values", dim.name, dim.values.len()),
            );
        }
        let mut labels = HashSet::new();
        for v in &dim.values {
            let label = normalize(&v.label);
            if label.is_empty() {
                push(ReasonCode::EmptyLabel, format!("empty value label in `{}`", dim.name));
                continue;
            }
            if label == NONE_LABEL.to_lowercase() {
                push(ReasonCode::ReservedLabel, format!("`{}` uses `{NONE_LABEL}`", dim.name));
            }
            if v.definition.trim().is_empty() {
                push(ReasonCode::EmptyDefinition, format!("`{}: {}`", dim.name, v.label));
            }
            if !labels.insert(label) {
                push(ReasonCode::DuplicateValue, format!("`{}: {}`", dim.name, v.label));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { issues })
    }
}

/// Parses model output (fenced or not) into a taxonomy without validating it.
pub fn parse_dimension_document(text: &str) -> Result<DimensionValueSet, DistillError> {
    let body = json::extract_object(text).ok_or_else(|| DistillError::Parse("no JSON object found".into()))?;
    serde_json::from_str(body).map_err(|e| DistillError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDigest {
    pub video_id: String,
    pub transcript_summary: String,
    pub observation_summary: String,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptSummary {
    pub summary: String,
    pub flags: Vec<Flag>,
}

fn chunk_words(text: &str, max_tokens: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() && estimate_tokens(&current) + estimate_tokens(word) + 1 > max_tokens {
            chunks.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Tokens available for a single binding of `template` under the window.
fn binding_budget(gw: &Gateway, template: TemplateId) -> usize {
    let overhead = estimate_tokens(template.body()) + template.default_max_output_tokens() as usize;
    gw.policy().context_window.saturating_sub(overhead + 64).max(64)
}

/// Summarizes a transcript. Transcripts longer than the window are
/// summarized chunk by chunk and the partial summaries summarized again.
pub fn summarize_video(gw: &Gateway, video: &Video) -> Result<TranscriptSummary, GatewayError> {
    let mut flags = Vec::new();
    if video.transcript.trim().is_empty() {
        flags.push(Flag::EmptyTranscript {
            video_id: video.video_id.clone(),
        });
        return Ok(TranscriptSummary {
            summary: String::new(),
            flags,
        });
    }
    let budget = binding_budget(gw, TemplateId::TranscriptSummary);
    let mut text = video.transcript.clone();
    let mut rounds = 0;
    let summary = loop {
        let chunks = chunk_words(&text, budget);
        if chunks.len() == 1 {
            break summarize_chunk(gw, &video.video_id, &chunks[0])?;
        }
        rounds += 1;
        if rounds == 1 {
            flags.push(Flag::TranscriptChunked {
                video_id: video.video_id.clone(),
                chunks: chunks.len(),
            });
        }
        let parts: Result<Vec<String>, GatewayError> =
            chunks.iter().map(|c| summarize_chunk(gw, &video.video_id, c)).collect();
        let joined = parts?.join("\n");
        // Guard against a provider that never shrinks its input.
        if rounds > 8 || estimate_tokens(&joined) >= estimate_tokens(&text) {
            break chunk_words(&joined, budget).remove(0);
        }
        text = joined;
    };
    let tokens = estimate_tokens(&summary);
    if tokens > TRANSCRIPT_SUMMARY_TOKENS {
        flags.push(Flag::SummaryOverLength {
            video_id: video.video_id.clone(),
            estimated_tokens: tokens,
            limit: TRANSCRIPT_SUMMARY_TOKENS,
        });
    }
    Ok(TranscriptSummary { summary, flags })
}

fn summarize_chunk(gw: &Gateway, video_id: &str, chunk: &str) -> Result<String, GatewayError> {
    let req = CompletionRequest::new(TemplateId::TranscriptSummary)
        .var("transcript", chunk)
        .var("video_id", video_id);
    Ok(gw.complete(&req)?.text.trim().to_string())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Writes the audience observation summary for one video. Returns `None`
/// (with a flag) when the video has no comments.
pub fn summarize_audience(
    gw: &Gateway,
    video: &Video,
    transcript_summary: &str,
    flags: &mut Vec<Flag>,
) -> Result<Option<String>, GatewayError> {
    if video.comments.is_empty() {
        flags.push(Flag::NoComments {
            video_id: video.video_id.clone(),
        });
        return Ok(None);
    }
    let description = format!(
        "Title: {}\nDescription: {}\nTranscript summary: {}",
        video.title, video.description, transcript_summary
    );
    let budget = binding_budget(gw, TemplateId::AudienceSummary).saturating_sub(estimate_tokens(&description));
    let mut comments = String::new();
    let mut kept = 0;
    for c in &video.comments {
        let line = format!("- {}\n", one_line(&c.text));
        if kept > 0 && estimate_tokens(&comments) + estimate_tokens(&line) > budget {
            break;
        }
        comments.push_str(&line);
        kept += 1;
    }
    if kept < video.comments.len() {
        flags.push(Flag::CommentsTruncated {
            video_id: video.video_id.clone(),
            kept,
            total: video.comments.len(),
        });
    }
    let req = CompletionRequest::new(TemplateId::AudienceSummary)
        .var("video_description", description)
        .var("viewer_comments", comments.trim_end())
        .var("video_id", &video.video_id);
    let text = gw.complete(&req)?.text.trim().to_string();
    let tokens = estimate_tokens(&text);
    if tokens < OBSERVATION_BAND.0 || tokens > OBSERVATION_BAND.1 {
        flags.push(Flag::ObservationLength {
            video_id: video.video_id.clone(),
            estimated_tokens: tokens,
        });
    }
    Ok(Some(text))
}

/// Both summaries for every video, fanned out across videos.
pub fn digest_corpus(gw: &Gateway, corpus: &ChannelCorpus) -> Result<Vec<VideoDigest>, GatewayError> {
    gw.exec()
        .map(&corpus.videos, |video| {
            let ts = summarize_video(gw, video)?;
            let mut flags = ts.flags;
            let observation = summarize_audience(gw, video, &ts.summary, &mut flags)?;
            Ok(VideoDigest {
                video_id: video.video_id.clone(),
                transcript_summary: ts.summary,
                observation_summary: observation.unwrap_or_default(),
                flags,
            })
        })
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub set: DimensionValueSet,
    pub flags: Vec<Flag>,
}

/// Distills observation summaries into a validated taxonomy. Inputs that do
/// not fit one prompt are extracted per chunk and merged by union.
pub fn extract_dimension_values(gw: &Gateway, observations: &[String]) -> Result<Extraction, DistillError> {
    let texts: Vec<String> = observations
        .iter()
        .filter(|s| !s.trim().is_empty())
        .enumerate()
        .map(|(i, s)| format!("[{}] {}", i + 1, s.trim()))
        .collect();
    if texts.is_empty() {
        return Err(DistillError::NoObservations);
    }
    // Leave room for the retry note appended on re-asks.
    let budget = binding_budget(gw, TemplateId::DimvalExtract).saturating_sub(256).max(64);
    let mut chunks: Vec<String> = Vec::new();
    for t in texts {
        match chunks.last_mut() {
            Some(last) if estimate_tokens(last) + estimate_tokens(&t) < budget => {
                last.push_str("\n\n");
                last.push_str(&t);
            }
            _ => chunks.push(t),
        }
    }

    let mut flags = Vec::new();
    let set = if chunks.len() == 1 {
        extract_with_reask(gw, &chunks[0])?
    } else {
        flags.push(Flag::ExtractionChunked { chunks: chunks.len() });
        let parts = gw
            .exec()
            .map(&chunks, |c| extract_with_reask(gw, c))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let merged = merge_sets(parts);
        validate_dimension_set(&merged)?;
        merged
    };
    if set.dimensions.len() > DIMENSION_SOFT_CAP {
        flags.push(Flag::ManyDimensions {
            count: set.dimensions.len(),
        });
    }
    Ok(Extraction { set, flags })
}

fn extract_with_reask(gw: &Gateway, text: &str) -> Result<DimensionValueSet, DistillError> {
    let mut note = String::new();
    let mut last_err = None;
    for _ in 0..=EXTRACTION_RETRIES {
        let req = CompletionRequest::new(TemplateId::DimvalExtract).var("text", format!("{text}{note}"));
        let out = gw.complete(&req)?;
        let result = parse_dimension_document(&out.text).and_then(|set| {
            validate_dimension_set(&set)?;
            Ok(set)
        });
        match result {
            Ok(set) => return Ok(set),
            Err(e) => {
                note = match &e {
                    DistillError::Validation(v) => format!(
                        "\n\nYOUR PREVIOUS OUTPUT WAS REJECTED FOR: {}. Fix these problems.",
                        summarize_issues(&v.issues)
                    ),
                    _ => "\n\nYOUR PREVIOUS OUTPUT WAS NOT VALID JSON. Return only the JSON object.".to_string(),
                };
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Union by dimension name, then by value label (both case-insensitive).
pub fn merge_sets(parts: Vec<DimensionValueSet>) -> DimensionValueSet {
    let mut merged = DimensionValueSet::default();
    for part in parts {
        for dim in part.dimensions {
            let key = normalize(&dim.name);
            match merged.dimensions.iter_mut().find(|d| normalize(&d.name) == key) {
                Some(existing) => {
                    for v in dim.values {
                        let label = normalize(&v.label);
                        if !existing.values.iter().any(|e| normalize(&e.label) == label) {
                            existing.values.push(v);
                        }
                    }
                }
                None => merged.dimensions.push(dim),
            }
        }
    }
    merged
}
