//! Persona synthesis: one profile per audience cluster, custom personas
//! from hand-picked values, and new-value suggestions for a dimension.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{AnnotatedComment, ClusterResult};
use crate::corpus::ChannelCorpus;
use crate::distill::{DimensionValueSet, Value, NONE_LABEL};
use crate::flags::Flag;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateId};
use crate::json::extract_object;

pub const TOP_VALUES: usize = 5;
pub const MIN_EXPERIENCES: usize = 2;
pub const REPRESENTATIVE_COMMENTS: usize = 10;
pub const PERSONA_RETRIES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unreadable persona output: {0}")]
    Parse(String),
    #[error("persona rejected: {0}")]
    Validation(PersonaValidationError),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("no values chosen")]
    EmptySelection,
    #[error("`{dimension}: {value}` is not in the taxonomy")]
    InvalidValuePair { dimension: String, value: String },
    #[error("more than one value chosen for `{0}`")]
    DuplicateDimension(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("suggested value `{label}` collides with an existing value")]
    SuggestionCollision { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Clustered,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValuePair {
    pub dimension: String,
    pub value: String,
}

impl ValuePair {
    pub fn new(dimension: &str, value: &str) -> Self {
        ValuePair {
            dimension: dimension.to_string(),
            value: value.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub persona_id: String,
    pub name: String,
    pub job: String,
    pub explanation: String,
    pub reason: String,
    pub personal_experiences: Vec<String>,
    pub top_values: Vec<ValuePair>,
    pub relevant_videos: Vec<String>,
    pub origin: Origin,
    /// Source cluster for CLUSTERED personas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

impl PersonaProfile {
    /// Plain-text profile used as the `profile` prompt binding.
    pub fn profile_text(&self) -> String {
        let mut s = format!(
            "Name: {}\nJob: {}\nAbout: {}\nWhy I watch: {}\nPersonal experiences:\n",
            self.name, self.job, self.explanation, self.reason
        );
        for e in &self.personal_experiences {
            s.push_str("- ");
            s.push_str(e);
            s.push('\n');
        }
        if !self.top_values.is_empty() {
            let traits: Vec<String> = self.top_values.iter().map(|p| format!("{}: {}", p.dimension, p.value)).collect();
            s.push_str("Key traits: ");
            s.push_str(&traits.join("; "));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PersonaIssue {
    EmptyField(&'static str),
    TooFewExperiences(usize),
    EmptyExperience,
    TooManyTopValues(usize),
    UnknownValuePair(ValuePair),
    MissingCluster,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaValidationError {
    pub issues: Vec<PersonaIssue>,
}

impl std::fmt::Display for PersonaValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(|i| format!("{i:?}")).collect();
        f.write_str(&parts.join(", "))
    }
}

impl std::error::Error for PersonaValidationError {}

/// Same rules for clustered and custom personas.
pub fn validate_persona(p: &PersonaProfile, set: &DimensionValueSet) -> Result<(), PersonaValidationError> {
    let mut issues = Vec::new();
    for (field, value) in [
        ("name", &p.name),
        ("job", &p.job),
        ("explanation", &p.explanation),
        ("reason", &p.reason),
    ] {
        if value.trim().is_empty() {
            issues.push(PersonaIssue::EmptyField(field));
        }
    }
    if p.personal_experiences.len() < MIN_EXPERIENCES {
        issues.push(PersonaIssue::TooFewExperiences(p.personal_experiences.len()));
    }
    if p.personal_experiences.iter().any(|e| e.trim().is_empty()) {
        issues.push(PersonaIssue::EmptyExperience);
    }
    if p.top_values.len() > TOP_VALUES {
        issues.push(PersonaIssue::TooManyTopValues(p.top_values.len()));
    }
    for pair in &p.top_values {
        if !set.contains_pair(&pair.dimension, &pair.value) {
            issues.push(PersonaIssue::UnknownValuePair(pair.clone()));
        }
    }
    if p.origin == Origin::Clustered && p.cluster.is_none() {
        issues.push(PersonaIssue::MissingCluster);
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(PersonaValidationError { issues })
    }
}

/// The model-authored part of a profile, with the prompt's key names.
#[derive(Debug, Clone, Deserialize)]
struct Draft {
    name: String,
    job: String,
    explanation: String,
    reason: String,
    personal_experiences: Vec<String>,
}

fn parse_draft(text: &str) -> Result<Draft, PersonaError> {
    let obj = extract_object(text).ok_or_else(|| PersonaError::Parse("no JSON object".into()))?;
    serde_json::from_str(obj).map_err(|e| PersonaError::Parse(e.to_string()))
}

/// Per-(dimension, value) counts over a cluster's annotations, in taxonomy
/// order. "None" is not counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFrequencyTable {
    pub cluster_size: usize,
    pub counts: Vec<(ValuePair, usize)>,
}

impl ValueFrequencyTable {
    pub fn build(members: &[&AnnotatedComment], set: &DimensionValueSet) -> Self {
        let mut counts = Vec::new();
        for d in &set.dimensions {
            for v in &d.values {
                let n = members
                    .iter()
                    .filter(|a| a.assignments.get(&d.name).map(String::as_str) == Some(v.label.as_str()))
                    .count();
                counts.push((ValuePair::new(&d.name, &v.label), n));
            }
        }
        ValueFrequencyTable {
            cluster_size: members.len(),
            counts,
        }
    }

    /// Nonzero entries by count descending; ties keep taxonomy order.
    pub fn ranked(&self) -> Vec<(ValuePair, usize)> {
        let mut v: Vec<(ValuePair, usize)> = self.counts.iter().filter(|(_, n)| *n > 0).cloned().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1));
        v
    }

    pub fn top_values(&self) -> Vec<ValuePair> {
        self.ranked().into_iter().take(TOP_VALUES).map(|(p, _)| p).collect()
    }

    /// `dimension: value (count/total)` lines.
    pub fn render(&self) -> String {
        self.ranked()
            .iter()
            .map(|(p, n)| format!("{}: {} ({}/{})", p.dimension, p.value, n, self.cluster_size))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Videos ranked by how many cluster comments came from them; ties by corpus order.
pub fn compute_relevant_videos(members: &[&AnnotatedComment], corpus: &ChannelCorpus) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in members {
        *counts.entry(a.source_video_id.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .map(|(v, n)| (v, n, corpus.video_position(v).unwrap_or(usize::MAX)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(b.0)));
    ranked.into_iter().map(|(v, _, _)| v.to_string()).collect()
}

/// Everything persona generation needs to know about one cluster.
#[derive(Debug, Clone)]
pub struct ClusterView<'a> {
    pub cluster: usize,
    pub members: Vec<&'a AnnotatedComment>,
    /// Texts of the members nearest the centroid.
    pub representative_comments: Vec<String>,
    /// Rendered trait profiles of the other clusters.
    pub other_clusters: String,
}

pub fn cluster_views<'a>(
    corpus: &ChannelCorpus,
    annotations: &'a [AnnotatedComment],
    result: &ClusterResult,
    set: &DimensionValueSet,
) -> Vec<ClusterView<'a>> {
    let by_id: BTreeMap<&str, &AnnotatedComment> = annotations.iter().map(|a| (a.comment_id.as_str(), a)).collect();
    let mut members: Vec<Vec<&AnnotatedComment>> = vec![Vec::new(); result.k];
    let mut nearest: Vec<Vec<(f64, usize, &str)>> = vec![Vec::new(); result.k];
    for (pos, a) in result.assignments.iter().enumerate() {
        if let Some(ann) = by_id.get(a.comment_id.as_str()) {
            members[a.cluster].push(ann);
            nearest[a.cluster].push((a.distance, pos, a.comment_id.as_str()));
        }
    }
    let tables: Vec<ValueFrequencyTable> = members.iter().map(|m| ValueFrequencyTable::build(m, set)).collect();
    (0..result.k)
        .map(|c| {
            let mut near = nearest[c].clone();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let representative_comments = near
                .iter()
                .take(REPRESENTATIVE_COMMENTS)
                .filter_map(|(_, _, id)| corpus.comment(id))
                .map(|c| c.text.split_whitespace().collect::<Vec<_>>().join(" "))
                .collect();
            let other_clusters = (0..result.k)
                .filter(|&o| o != c)
                .map(|o| {
                    let traits: Vec<String> = tables[o]
                        .top_values()
                        .iter()
                        .map(|p| format!("{}: {}", p.dimension, p.value))
                        .collect();
                    format!("Group {}: {}", o + 1, traits.join("; "))
                })
                .collect::<Vec<_>>()
                .join("\n");
            ClusterView {
                cluster: c,
                members: members[c].clone(),
                representative_comments,
                other_clusters,
            }
        })
        .collect()
}

fn existing_json(existing: &[PersonaProfile]) -> String {
    let list: Vec<serde_json::Value> = existing
        .iter()
        .map(|p| serde_json::json!({ "name": p.name, "job": p.job, "explanation": p.explanation, "reason": p.reason }))
        .collect();
    serde_json::Value::Array(list).to_string()
}

fn name_taken(name: &str, existing: &[PersonaProfile]) -> bool {
    let n = name.trim().to_lowercase();
    existing.iter().any(|p| p.name.trim().to_lowercase() == n)
}

/// Asks for a draft until it parses, validates, and has a fresh name.
/// `build` receives the correction note for re-asks.
fn ask_for_profile(
    gw: &Gateway,
    set: &DimensionValueSet,
    existing: &[PersonaProfile],
    build: impl Fn(&str) -> CompletionRequest,
    finish: impl Fn(Draft) -> PersonaProfile,
) -> Result<PersonaProfile, PersonaError> {
    let mut note = String::new();
    let mut last = None;
    for _ in 0..=PERSONA_RETRIES {
        let out = gw.complete(&build(&note))?;
        let result = parse_draft(&out.text).and_then(|draft| {
            if name_taken(&draft.name, existing) {
                return Err(PersonaError::Parse(format!("name `{}` is already used", draft.name.trim())));
            }
            let profile = finish(draft);
            validate_persona(&profile, set).map_err(PersonaError::Validation)?;
            Ok(profile)
        });
        match result {
            Ok(p) => return Ok(p),
            Err(e) => {
                note = format!("\n\nYOUR PREVIOUS ANSWER WAS REJECTED: {e}. Return one corrected JSON object.");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn trimmed(d: Draft) -> Draft {
    Draft {
        name: d.name.trim().to_string(),
        job: d.job.trim().to_string(),
        explanation: d.explanation.trim().to_string(),
        reason: d.reason.trim().to_string(),
        personal_experiences: d.personal_experiences.into_iter().map(|e| e.trim().to_string()).collect(),
    }
}

pub fn generate_persona(
    gw: &Gateway,
    corpus: &ChannelCorpus,
    view: &ClusterView<'_>,
    set: &DimensionValueSet,
    existing: &[PersonaProfile],
) -> Result<PersonaProfile, PersonaError> {
    if view.members.is_empty() {
        return Err(PersonaError::EmptyCluster(view.cluster));
    }
    let table = ValueFrequencyTable::build(&view.members, set);
    let top_values = table.top_values();
    let relevant_videos = compute_relevant_videos(&view.members, corpus);
    let comments: String = view
        .representative_comments
        .iter()
        .map(|c| format!("- {c}"))
        .collect::<Vec<_>>()
        .join("\n");
    let dv_set = set.to_json();
    let existing_list = existing_json(existing);
    let values_ratio = table.render();
    ask_for_profile(
        gw,
        set,
        existing,
        |note| {
            CompletionRequest::new(TemplateId::PersonaGenerate)
                .var("dv_set", dv_set.clone())
                .var("other_group_dimensions_values_set", view.other_clusters.clone())
                .var("existing_personas", existing_list.clone())
                .var("values_ratio", values_ratio.clone())
                .var("comments", format!("{comments}{note}"))
        },
        |d| {
            let d = trimmed(d);
            PersonaProfile {
                persona_id: format!("persona-{}", view.cluster + 1),
                name: d.name,
                job: d.job,
                explanation: d.explanation,
                reason: d.reason,
                personal_experiences: d.personal_experiences,
                top_values: top_values.clone(),
                relevant_videos: relevant_videos.clone(),
                origin: Origin::Clustered,
                cluster: Some(view.cluster),
            }
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonaBatch {
    pub personas: Vec<PersonaProfile>,
    pub flags: Vec<Flag>,
}

/// One persona per cluster, generated in cluster order so each prompt sees
/// the personas already accepted. A cluster whose output never validates is
/// flagged and skipped; gateway failures abort.
pub fn generate_personas(
    gw: &Gateway,
    corpus: &ChannelCorpus,
    annotations: &[AnnotatedComment],
    result: &ClusterResult,
    set: &DimensionValueSet,
) -> Result<PersonaBatch, GatewayError> {
    let mut personas = Vec::new();
    let mut flags = Vec::new();
    for view in cluster_views(corpus, annotations, result, set) {
        match generate_persona(gw, corpus, &view, set, &personas) {
            Ok(p) => personas.push(p),
            Err(PersonaError::Gateway(e)) => return Err(e),
            Err(e) => {
                tracing::warn!(cluster = view.cluster, error = %e, "persona generation failed");
                flags.push(Flag::PersonaFailed {
                    cluster: view.cluster,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(PersonaBatch { personas, flags })
}

/// Checks a custom value selection: nonempty, known pairs, one per dimension.
pub fn check_chosen_values(chosen: &[ValuePair], set: &DimensionValueSet) -> Result<(), PersonaError> {
    if chosen.is_empty() {
        return Err(PersonaError::EmptySelection);
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in chosen {
        if !set.contains_pair(&p.dimension, &p.value) {
            return Err(PersonaError::InvalidValuePair {
                dimension: p.dimension.clone(),
                value: p.value.clone(),
            });
        }
        if !seen.insert(p.dimension.as_str()) {
            return Err(PersonaError::DuplicateDimension(p.dimension.clone()));
        }
    }
    Ok(())
}

/// A CUSTOM persona built from chosen values. `observational_summary` is
/// the channel-level audience digest.
pub fn create_custom_persona(
    gw: &Gateway,
    chosen: &[ValuePair],
    set: &DimensionValueSet,
    existing: &[PersonaProfile],
    observational_summary: &str,
) -> Result<PersonaProfile, PersonaError> {
    check_chosen_values(chosen, set)?;
    let chosen_text = chosen
        .iter()
        .map(|p| {
            let def = set
                .dimension(&p.dimension)
                .and_then(|d| d.value(&p.value))
                .map(|v| v.definition.as_str())
                .unwrap_or("");
            format!("{}: {} ({def})", p.dimension, p.value)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let existing_list = existing_json(existing);
    let custom_count = existing.iter().filter(|p| p.origin == Origin::Custom).count();
    ask_for_profile(
        gw,
        set,
        existing,
        |note| {
            CompletionRequest::new(TemplateId::PersonaCustom)
                .var("existing_personas", existing_list.clone())
                .var("chosen_values", chosen_text.clone())
                .var("observational_summary", format!("{observational_summary}{note}"))
        },
        |d| {
            let d = trimmed(d);
            PersonaProfile {
                persona_id: format!("custom-{}", custom_count + 1),
                name: d.name,
                job: d.job,
                explanation: d.explanation,
                reason: d.reason,
                personal_experiences: d.personal_experiences,
                top_values: chosen.to_vec(),
                relevant_videos: Vec::new(),
                origin: Origin::Custom,
                cluster: None,
            }
        },
    )
}

#[derive(Debug, Deserialize)]
struct Suggestion {
    value: String,
    definition: String,
}

/// Proposes one new value for `dimension`. The set is not modified; see
/// [`add_value`].
pub fn suggest_value(
    gw: &Gateway,
    channel_name: &str,
    set: &DimensionValueSet,
    dimension: &str,
) -> Result<Value, PersonaError> {
    let dim = set
        .dimension(dimension)
        .ok_or_else(|| PersonaError::UnknownDimension(dimension.to_string()))?;
    let labels: Vec<&str> = dim.values.iter().map(|v| v.label.as_str()).collect();
    let existing_values = serde_json::to_string(&labels).expect("labels serialize");
    let dv_set = set.to_json();
    let mut note = String::new();
    let mut last = None;
    for _ in 0..=PERSONA_RETRIES {
        let req = CompletionRequest::new(TemplateId::ValueSuggest)
            .var("channel_name", channel_name)
            .var("dv_set", format!("{dv_set}{note}"))
            .var("dimension", dim.name.clone())
            .var("existing_values", existing_values.clone());
        let out = gw.complete(&req)?;
        let parsed = extract_object(&out.text)
            .ok_or_else(|| PersonaError::Parse("no JSON object".into()))
            .and_then(|o| serde_json::from_str::<Suggestion>(o).map_err(|e| PersonaError::Parse(e.to_string())))
            .and_then(|s| {
                let label = s.value.trim().to_string();
                let definition = s.definition.trim().to_string();
                if label.is_empty() || definition.is_empty() {
                    return Err(PersonaError::Parse("empty value or definition".into()));
                }
                let lower = label.to_lowercase();
                if lower == NONE_LABEL.to_lowercase() || labels.iter().any(|l| l.to_lowercase() == lower) {
                    return Err(PersonaError::SuggestionCollision { label });
                }
                Ok(Value { label, definition })
            });
        match parsed {
            Ok(v) => return Ok(v),
            Err(e) => {
                note = format!("\n\nYOUR PREVIOUS ANSWER WAS REJECTED: {e}. Suggest a different value.");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Appends a confirmed suggestion to its dimension.
pub fn add_value(set: &mut DimensionValueSet, dimension: &str, value: Value) -> Result<(), PersonaError> {
    let dim = set
        .dimension_mut(dimension)
        .ok_or_else(|| PersonaError::UnknownDimension(dimension.to_string()))?;
    let lower = value.label.trim().to_lowercase();
    if lower == NONE_LABEL.to_lowercase() || dim.values.iter().any(|v| v.label.trim().to_lowercase() == lower) {
        return Err(PersonaError::SuggestionCollision { label: value.label });
    }
    dim.values.push(value);
    Ok(())
}
