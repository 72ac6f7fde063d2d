//! Offline providers.
//!
//! [`StubProvider`] answers every template with a canned, schema-valid
//! document that is a pure function of the request bindings, and embeds text
//! as a bag of hashed tokens so that lexically similar strings land near each
//! other. [`FnProvider`] wraps a closure for scripted tests.

use super::{CompletionProvider, CompletionRequest, EmbeddingProvider, ProviderError, TemplateId};

pub const STUB_EMBEDDING_DIM: usize = 64;

const EMBED_SEED: u64 = 0x5eed_f0f0_1234_abcd;
/// Weight of the whole-string component; keeps token permutations distinct.
const WHOLE_TEXT_WEIGHT: f64 = 0.05;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hashed_direction(key: &str, out: &mut [f64], weight: f64) {
    let mut state = fnv1a(key.as_bytes()) ^ EMBED_SEED;
    for slot in out.iter_mut() {
        let unit = (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64;
        *slot += weight * (2.0 * unit - 1.0);
    }
}

/// Lowercased alphanumeric runs.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn stub_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; STUB_EMBEDDING_DIM];
    for token in tokens(text) {
        hashed_direction(&token, &mut v, 1.0);
    }
    hashed_direction(&format!("\u{0}{text}"), &mut v, WHOLE_TEXT_WEIGHT);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

const GENERATED_PERSONAS: &[(&str, &str)] = &[
    ("Riley", "Home Interior Consultant"),
    ("Jesse", "Vintage Shop Owner"),
    ("Morgan", "Community Garden Coordinator"),
    ("Avery", "Elementary School Teacher"),
    ("Quinn", "Freelance Illustrator"),
    ("Taylor", "Hospital Night-Shift Nurse"),
    ("Jordan", "Food Truck Operator"),
    ("Casey", "University Research Assistant"),
    ("Dana", "Retired Civil Engineer"),
    ("Robin", "Wedding Photographer"),
];

const CUSTOM_PERSONAS: &[(&str, &str)] = &[
    ("Sally", "Practical Urban Gardener"),
    ("Harper", "Apartment Building Manager"),
    ("Emerson", "Weekend Market Vendor"),
    ("Rowan", "Landscape Architecture Student"),
];

const EXPERTISE_SUGGESTIONS: &[(&str, &str)] = &[
    ("Passing Knowledge", "Audience with a casual familiarity picked up from occasional videos."),
    ("Seasoned Practitioner", "Audience with years of hands-on practice who look for refinements."),
];

const GENERIC_SUGGESTIONS: &[(&str, &str)] = &[
    ("Occasional Browsers", "Viewers who drop in for single videos without following the series."),
    ("Deep Divers", "Viewers who binge related videos to master one topic in depth."),
    ("Weekend Tinkerers", "Viewers who try ideas only on weekends as a relaxing side project."),
    ("Trend Watchers", "Viewers who follow the channel to keep up with what is new."),
];

/// Deterministic offline provider for both completions and embeddings.
#[derive(Debug, Default, Clone)]
pub struct StubProvider;

impl StubProvider {
    pub fn new() -> Self {
        StubProvider
    }

    pub fn canned_dimension_document() -> &'static str {
        r#"{
  "Cultural Interests": [
    {"value": "Classic Literature Aficionados", "definition": "Viewers with a deep appreciation for classic literature and its exploration of human nature."},
    {"value": "Diverse Genre Explorers", "definition": "Audience members open to various literary genres and authors, from essays to novels."},
    {"value": "Art and Exhibition Enthusiasts", "definition": "Viewers who enjoy exhibitions related to books, art, and cultural events."}
  ],
  "Future Content Anticipation": [
    {"value": "Q&A Anticipators", "definition": "Viewers looking forward to more personal Q&A videos with the creator."},
    {"value": "Recommendation Seekers", "definition": "Individuals eager for more book recommendations and reading-related discussions."},
    {"value": "Community Involvement Hopefuls", "definition": "Audience members interested in potential collaborations or joining book clubs."}
  ],
  "Language and Cultural Connection": [
    {"value": "Korean Language Speakers", "definition": "Predominantly Korean-speaking audience members engaging with the channel's content."},
    {"value": "Cultural Supporters", "definition": "Viewers who express support for the channel's impact on literature and personal experiences."},
    {"value": "Personal Item Curiosity", "definition": "Individuals who ask questions about the content creator's personal items seen in videos."}
  ],
  "Reading Experience Value": [
    {"value": "Reading Habit Formers", "definition": "Viewers interested in developing and sharing their reading routines for relaxation and growth."},
    {"value": "E-Book vs. Paper Book Debaters", "definition": "Audience members who engage in discussions about their preferences for book formats."},
    {"value": "Genre Adventurers", "definition": "Viewers who appreciate a diverse range of book genres and recommendations."}
  ]
}"#
    }

    fn transcript_summary(req: &CompletionRequest) -> String {
        let id = req.get("video_id").unwrap_or("unknown");
        let words: Vec<&str> = req.get("transcript").unwrap_or("").split_whitespace().take(80).collect();
        format!("[video:{id}] Summary: {}", words.join(" "))
    }

    fn audience_summary(req: &CompletionRequest) -> String {
        let id = req.get("video_id").unwrap_or("unknown");
        let n = req
            .get("viewer_comments")
            .map(|c| c.lines().filter(|l| !l.trim().is_empty()).count())
            .unwrap_or(0);
        format!(
            "[video:{id}] Observation summary drawn from {n} viewer comments. The audience of this video \
             is made up of hands-on hobbyists who want practical, step-by-step guidance they can apply \
             right away, alongside a smaller group of viewers who watch mainly for the calm atmosphere \
             and the visual presentation. Many commenters describe their own attempts, share small \
             setbacks, and ask follow-up questions about materials, timing, and budget, which suggests \
             an audience that learns by doing and values the creator's honesty about mistakes. A \
             recurring thread is interest in adapting the techniques to limited space and limited time, \
             so content that offers scaled-down variations resonates strongly. Several viewers also \
             mention returning to older videos as reference material, which indicates that they treat \
             the channel as a trusted library rather than casual entertainment, and they respond well \
             to clear explanations of why each step matters."
        )
    }

    fn dimension_labels(dv_set: &str) -> Vec<(String, Vec<String>)> {
        let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(dv_set) else {
            return Vec::new();
        };
        map.into_iter()
            .map(|(dim, values)| {
                let labels = values
                    .as_array()
                    .map(|vs| {
                        vs.iter()
                            .filter_map(|v| match v {
                                serde_json::Value::Object(o) => {
                                    o.get("value").and_then(|x| x.as_str()).map(str::to_string)
                                }
                                serde_json::Value::String(s) => {
                                    Some(s.split(':').next().unwrap_or(s).trim().to_string())
                                }
                                _ => None,
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                (dim, labels)
            })
            .collect()
    }

    fn classify(req: &CompletionRequest) -> String {
        let dims = Self::dimension_labels(req.get("dv_set").unwrap_or(""));
        let comments = req.get("comments").unwrap_or("");
        let mut lines = Vec::new();
        for comment in comments.lines().filter(|l| l.trim_start().starts_with('[')) {
            let pairs: Vec<String> = dims
                .iter()
                .map(|(dim, labels)| {
                    let h = fnv1a(format!("{dim}\u{1}{comment}").as_bytes());
                    let slot = (h % (labels.len() as u64 + 1)) as usize;
                    let value = labels.get(slot).map(String::as_str).unwrap_or("None");
                    format!("[{dim}: {value}]")
                })
                .collect();
            lines.push(format!("[{}]", pairs.join(", ")));
        }
        lines.join("\n")
    }

    fn pick_unused<'a>(pool: &'a [(&'a str, &'a str)], existing: &str) -> (String, String) {
        pool.iter()
            .find(|(name, _)| !existing.contains(&format!("\"{name}\"")))
            .map(|(n, j)| (n.to_string(), j.to_string()))
            .unwrap_or_else(|| {
                let n = existing.matches("\"name\"").count() + 1;
                (format!("Persona {n}"), "Content Enthusiast".to_string())
            })
    }

    fn persona(req: &CompletionRequest, custom: bool) -> String {
        let existing = req.get("existing_personas").unwrap_or("");
        let (pool, traits) = if custom {
            (CUSTOM_PERSONAS, req.get("chosen_values").unwrap_or(""))
        } else {
            (GENERATED_PERSONAS, req.get("values_ratio").unwrap_or(""))
        };
        let (name, job) = Self::pick_unused(pool, existing);
        let lead_trait = traits
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("a practical outlook");
        serde_json::json!({
            "name": name,
            "job": job,
            "explanation": format!("A {} who is defined above all by {lead_trait}.", job.to_lowercase()),
            "reason": format!("Watches this channel because the videos speak directly to {lead_trait}."),
            "personal_experiences": [
                "Recently reorganized a small shared space with a friend over a single weekend.",
                "Volunteered to run a hands-on workshop at a local community center last month."
            ]
        })
        .to_string()
    }

    fn chat(req: &CompletionRequest) -> String {
        let title = req
            .get("video_title")
            .and_then(|t| t.split(';').map(str::trim).find(|s| !s.is_empty()))
            .unwrap_or("your latest video");
        let question_words = req.get("new_input").map(|q| q.split_whitespace().count()).unwrap_or(0);
        format!(
            "Honestly, what keeps me coming back is \"{title}\". It showed exactly the kind of \
             practical detail I can try after work, and your question ({question_words} words) is one \
             I think about a lot. I'd love more of that hands-on angle."
        )
    }

    fn plot_feedback(req: &CompletionRequest) -> String {
        let plot_words = req.get("plot_content").map(|p| p.split_whitespace().count()).unwrap_or(0);
        format!(
            "I'm a bit skeptical about this {plot_words}-word draft. The opening feels slow for someone \
             like me; show the finished result first, then walk back through the steps I can actually copy."
        )
    }

    fn inline_feedback(req: &CompletionRequest) -> String {
        let selected = req.get("text").unwrap_or("").split_whitespace().count();
        match req.get("mode").unwrap_or("") {
            "EVALUATION" => format!(
                "Evaluation: viewers like me would react positively to this {selected}-word part, but it \
                 needs one concrete example to feel trustworthy."
            ),
            _ => format!(
                "Suggestion: cut this {selected}-word part to two sentences and add a quick close-up \
                 showing the exact materials, so I can follow along step by step."
            ),
        }
    }

    fn suggest(req: &CompletionRequest) -> String {
        let dimension = req.get("dimension").unwrap_or("").to_lowercase();
        let existing: Vec<String> = serde_json::from_str::<Vec<String>>(req.get("existing_values").unwrap_or("[]"))
            .unwrap_or_default()
            .into_iter()
            .map(|s| s.to_lowercase())
            .collect();
        let mut pool: Vec<(&str, &str)> = Vec::new();
        if dimension.contains("expertise") || dimension.contains("skill") {
            pool.extend_from_slice(EXPERTISE_SUGGESTIONS);
        }
        pool.extend_from_slice(GENERIC_SUGGESTIONS);
        let (value, definition) = pool
            .iter()
            .find(|(v, _)| !existing.contains(&v.to_lowercase()))
            .copied()
            .unwrap_or(GENERIC_SUGGESTIONS[0]);
        serde_json::json!({ "value": value, "definition": definition }).to_string()
    }
}

impl CompletionProvider for StubProvider {
    fn complete(&self, req: &CompletionRequest, _prompt: &str) -> Result<String, ProviderError> {
        Ok(match req.template_id {
            TemplateId::TranscriptSummary => Self::transcript_summary(req),
            TemplateId::AudienceSummary => Self::audience_summary(req),
            TemplateId::DimvalExtract => Self::canned_dimension_document().to_string(),
            TemplateId::CommentClassify => Self::classify(req),
            TemplateId::PersonaGenerate => Self::persona(req, false),
            TemplateId::PersonaCustom => Self::persona(req, true),
            TemplateId::Chat => Self::chat(req),
            TemplateId::PlotFeedback => Self::plot_feedback(req),
            TemplateId::InlineFeedback => Self::inline_feedback(req),
            TemplateId::ValueSuggest => Self::suggest(req),
        })
    }
}

impl EmbeddingProvider for StubProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| stub_embedding(t)).collect())
    }
}

type CompletionFn = dyn Fn(&CompletionRequest, &str) -> Result<String, ProviderError> + Send + Sync;

/// Completion provider backed by a closure.
pub struct FnProvider {
    f: Box<CompletionFn>,
}

impl FnProvider {
    pub fn new(
        f: impl Fn(&CompletionRequest, &str) -> Result<String, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        FnProvider { f: Box::new(f) }
    }
}

impl CompletionProvider for FnProvider {
    fn complete(&self, req: &CompletionRequest, prompt: &str) -> Result<String, ProviderError> {
        (self.f)(req, prompt)
    }
}
