//! Persona conversation and storyline feedback, grounded in retrieved
//! transcript summaries.

mod grounded;
mod index;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::ChannelCorpus;
use crate::flags::Flag;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateId};
use crate::persona::PersonaProfile;

pub use grounded::{
    check_groundedness, extract_title_spans, hallucination_rate, normalize_title, title_similarity, validate_response,
    GroundednessVerdict, ResponseCheck, TitleMatcher, Verdict, MIN_TITLE_CHARS, TITLE_MATCH_THRESHOLD,
};
pub use index::{build_index, cosine, IndexBuild, IndexEntry, Retrieved, SummaryIndex, DEFAULT_RETRIEVAL_DEPTH};

pub const CHAT_WORD_LIMIT: usize = 120;
pub const PLOT_WORD_LIMIT: usize = 80;
pub const INLINE_WORD_LIMIT: usize = 120;
pub const DEFAULT_REVIEW_REQUEST: &str = "Please review my current plot and tell me honestly how viewers like you would react.";

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("summary index is empty")]
    EmptyIndex,
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("span {start}..{end} is outside a draft of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("span was captured at revision {captured}, draft is at revision {current}")]
    StaleSpan { captured: u64, current: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Creator,
    Persona,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Exploration,
    Creation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeedbackMode {
    Suggestion,
    Evaluation,
}

impl FeedbackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMode::Suggestion => "SUGGESTION",
            FeedbackMode::Evaluation => "EVALUATION",
        }
    }

    /// The creator-facing menu option for this mode.
    pub fn prompt_label(self) -> &'static str {
        match self {
            FeedbackMode::Suggestion => "How can I revise or improve this section?",
            FeedbackMode::Evaluation => "What are your thoughts on this part?",
        }
    }
}

/// A selected draft range, in character offsets, at a given revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAnchor {
    pub storyline_id: String,
    pub revision: u64,
    pub start: usize,
    pub end: usize,
    pub mode: FeedbackMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub message_id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_name: Option<String>,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<SpanAnchor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_check: Option<ResponseCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<GroundednessVerdict>,
}

/// Source of message timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => t,
        }
    }
}

/// One conversation; the history is shared by every persona addressed in it
/// and only ever grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub phase: Phase,
    pub persona_ids: Vec<String>,
    history: Vec<Message>,
    #[serde(skip)]
    pub clock: Clock,
}

impl ChatSession {
    pub fn new(session_id: &str, phase: Phase) -> Self {
        ChatSession {
            session_id: session_id.to_string(),
            phase,
            persona_ids: Vec::new(),
            history: Vec::new(),
            clock: Clock::System,
        }
    }

    /// Rebuilds a session from stored messages.
    pub fn restore(session_id: &str, phase: Phase, history: Vec<Message>) -> Self {
        let mut s = ChatSession::new(session_id, phase);
        for m in &history {
            if let Some(p) = &m.persona_id {
                s.note_persona(p);
            }
        }
        s.history = history;
        s
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    fn note_persona(&mut self, id: &str) {
        if !self.persona_ids.iter().any(|p| p == id) {
            self.persona_ids.push(id.to_string());
        }
    }

    fn next_id(&self) -> String {
        format!("{}-m{:04}", self.session_id, self.history.len() + 1)
    }

    fn push_creator(&mut self, text: &str, anchor: Option<SpanAnchor>) -> &Message {
        let m = Message {
            message_id: self.next_id(),
            role: Role::Creator,
            persona_id: None,
            persona_name: None,
            text: text.to_string(),
            timestamp: self.clock.now(),
            anchor,
            length_check: None,
            verdict: None,
        };
        self.history.push(m);
        self.history.last().expect("just pushed")
    }

    fn push_persona(
        &mut self,
        persona: &PersonaProfile,
        text: &str,
        anchor: Option<SpanAnchor>,
        limit: usize,
        matcher: &TitleMatcher,
    ) -> &Message {
        let id = self.next_id();
        self.note_persona(&persona.persona_id);
        let m = Message {
            verdict: Some(matcher.check(&id, text)),
            length_check: Some(validate_response(text, limit)),
            message_id: id,
            role: Role::Persona,
            persona_id: Some(persona.persona_id.clone()),
            persona_name: Some(persona.name.clone()),
            text: text.to_string(),
            timestamp: self.clock.now(),
            anchor,
        };
        self.history.push(m);
        self.history.last().expect("just pushed")
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|m| serde_json::to_string(m).expect("message serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(session_id: &str, phase: Phase, text: &str) -> Result<Self, serde_json::Error> {
        let history = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Message>, _>>()?;
        Ok(ChatSession::restore(session_id, phase, history))
    }
}

/// `Creator: ...` / `<persona name>: ...` lines.
pub fn render_history(history: &[Message]) -> String {
    history
        .iter()
        .map(|m| {
            let who = match m.role {
                Role::Creator => "Creator",
                Role::Persona => m.persona_name.as_deref().unwrap_or("Persona"),
            };
            format!("{who}: {}", m.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_context(retrieved: &[Retrieved]) -> String {
    retrieved
        .iter()
        .map(|r| format!("- \"{}\": {}", r.title, r.summary))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A working draft. Every body write bumps the revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Storyline {
    pub storyline_id: String,
    pub topic: String,
    pub body: String,
    pub revision: u64,
}

impl Storyline {
    pub fn new(storyline_id: &str, topic: &str, body: &str) -> Self {
        Storyline {
            storyline_id: storyline_id.to_string(),
            topic: topic.to_string(),
            body: body.to_string(),
            revision: 1,
        }
    }

    pub fn char_len(&self) -> usize {
        self.body.chars().count()
    }

    /// Compare-and-set body write.
    pub fn patch(&mut self, expected_revision: u64, body: &str) -> Result<u64, DialogueError> {
        if expected_revision != self.revision {
            return Err(DialogueError::StaleSpan {
                captured: expected_revision,
                current: self.revision,
            });
        }
        self.body = body.to_string();
        self.revision += 1;
        Ok(self.revision)
    }

    /// Characters `start..end` of the body.
    pub fn slice(&self, start: usize, end: usize) -> Result<String, DialogueError> {
        let len = self.char_len();
        if start >= end || end > len {
            return Err(DialogueError::InvalidSpan { start, end, len });
        }
        Ok(self.body.chars().skip(start).take(end - start).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub persona_id: String,
    pub storyline_id: String,
    pub revision: u64,
    pub start: usize,
    pub end: usize,
    pub mode: FeedbackMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    pub retrieval_depth: usize,
    pub chat_word_limit: usize,
    pub plot_word_limit: usize,
    pub inline_word_limit: usize,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            retrieval_depth: DEFAULT_RETRIEVAL_DEPTH,
            chat_word_limit: CHAT_WORD_LIMIT,
            plot_word_limit: PLOT_WORD_LIMIT,
            inline_word_limit: INLINE_WORD_LIMIT,
        }
    }
}

/// Shared, read-only inputs for every dialogue operation on a project.
#[derive(Clone, Copy)]
pub struct Dialogue<'a> {
    pub gw: &'a Gateway,
    pub corpus: &'a ChannelCorpus,
    pub index: &'a SummaryIndex,
    pub config: &'a DialogueConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub message: Message,
    pub retrieved: Vec<Retrieved>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub replies: Vec<Message>,
    pub flags: Vec<Flag>,
}

impl<'a> Dialogue<'a> {
    fn matcher(&self) -> TitleMatcher {
        TitleMatcher::from_corpus(self.corpus)
    }

    /// Titles the persona has a record of watching, else the retrieved ones.
    fn video_titles(&self, persona: &PersonaProfile, retrieved: &[Retrieved]) -> String {
        let mut titles: Vec<&str> = persona
            .relevant_videos
            .iter()
            .take(DEFAULT_RETRIEVAL_DEPTH)
            .filter_map(|v| self.corpus.video(v).map(|v| v.title.as_str()))
            .collect();
        if titles.is_empty() {
            titles = retrieved.iter().map(|r| r.title.as_str()).collect();
        }
        titles.join("; ")
    }

    /// Builds a request with as much history as fits the context window,
    /// dropping the oldest turns first.
    fn fit_history(
        &self,
        history: &[Message],
        build: impl Fn(&str) -> CompletionRequest,
        flags: &mut Vec<Flag>,
    ) -> Result<CompletionRequest, DialogueError> {
        for dropped in 0..=history.len() {
            let req = build(&render_history(&history[dropped..]));
            match self.gw.prepare(&req) {
                Ok(_) => {
                    if dropped > 0 {
                        flags.push(Flag::HistoryTruncated { dropped });
                    }
                    return Ok(req);
                }
                Err(GatewayError::ContextOverflow { .. }) if dropped < history.len() => continue,
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!("the empty-history attempt returns")
    }

    fn length_flag(check: &ResponseCheck, flags: &mut Vec<Flag>) {
        if let ResponseCheck::LengthFlag { words, limit } = *check {
            flags.push(Flag::LengthExceeded { words, limit });
        }
    }

    /// One creator question and one persona answer, both appended.
    pub fn chat(&self, session: &mut ChatSession, persona: &PersonaProfile, question: &str) -> Result<Reply, DialogueError> {
        if question.trim().is_empty() {
            return Err(DialogueError::InvalidRequest("question is empty".into()));
        }
        let retrieved = self.index.retrieve(self.gw, question, self.config.retrieval_depth)?;
        let mut flags = Vec::new();
        let profile = persona.profile_text();
        let context = render_context(&retrieved);
        let titles = self.video_titles(persona, &retrieved);
        let req = self.fit_history(
            session.history(),
            |h| {
                CompletionRequest::new(TemplateId::Chat)
                    .var("channel_name", self.corpus.name.clone())
                    .var("video_title", titles.clone())
                    .var("profile", profile.clone())
                    .var("context", context.clone())
                    .var("chat_history", h)
                    .var("new_input", question.trim())
            },
            &mut flags,
        )?;
        let text = self.gw.complete(&req)?.text.trim().to_string();
        session.push_creator(question.trim(), None);
        let message = session
            .push_persona(persona, &text, None, self.config.chat_word_limit, &self.matcher())
            .clone();
        Self::length_flag(message.length_check.as_ref().expect("set on persona messages"), &mut flags);
        Ok(Reply {
            message,
            retrieved,
            flags,
        })
    }

    /// Every persona comments once on the full draft. A persona whose call
    /// fails is flagged and skipped.
    pub fn plot_review(
        &self,
        session: &mut ChatSession,
        personas: &[PersonaProfile],
        storyline: &Storyline,
        request: Option<&str>,
    ) -> Result<Review, DialogueError> {
        if storyline.body.trim().is_empty() {
            return Err(DialogueError::InvalidRequest("storyline is empty".into()));
        }
        if personas.is_empty() {
            return Err(DialogueError::InvalidRequest("no personas to review with".into()));
        }
        let ask = request.map(str::trim).filter(|r| !r.is_empty()).unwrap_or(DEFAULT_REVIEW_REQUEST);
        let retrieved = self.index.retrieve(self.gw, &storyline.body, self.config.retrieval_depth)?;
        let context = render_context(&retrieved);
        let history = session.history().to_vec();
        let outcomes = self.gw.exec().map(personas, |persona| {
            let mut flags = Vec::new();
            let titles = self.video_titles(persona, &retrieved);
            let profile = persona.profile_text();
            let req = self.fit_history(
                &history,
                |h| {
                    CompletionRequest::new(TemplateId::PlotFeedback)
                        .var("channel_name", self.corpus.name.clone())
                        .var("video_title", titles.clone())
                        .var("profile", profile.clone())
                        .var("context", context.clone())
                        .var("plot_content", storyline.body.clone())
                        .var("chat_history", h)
                        .var("new_input", ask)
                },
                &mut flags,
            )?;
            let text = self.gw.complete(&req)?.text.trim().to_string();
            Ok::<_, DialogueError>((text, flags))
        });

        session.push_creator(ask, None);
        let matcher = self.matcher();
        let mut replies = Vec::new();
        let mut flags = Vec::new();
        for (persona, outcome) in personas.iter().zip(outcomes) {
            match outcome {
                Ok((text, f)) => {
                    flags.extend(f);
                    let m = session
                        .push_persona(persona, &text, None, self.config.plot_word_limit, &matcher)
                        .clone();
                    Self::length_flag(m.length_check.as_ref().expect("set"), &mut flags);
                    replies.push(m);
                }
                Err(e) => {
                    tracing::warn!(persona = %persona.persona_id, error = %e, "plot review reply failed");
                    flags.push(Flag::PersonaReplyFailed {
                        persona_id: persona.persona_id.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        Ok(Review { replies, flags })
    }

    /// Feedback on a selected span of the current draft.
    pub fn inline_feedback(
        &self,
        session: &mut ChatSession,
        persona: &PersonaProfile,
        storyline: &Storyline,
        request: &FeedbackRequest,
    ) -> Result<Reply, DialogueError> {
        if request.storyline_id != storyline.storyline_id || request.persona_id != persona.persona_id {
            return Err(DialogueError::InvalidRequest("request does not match storyline or persona".into()));
        }
        if request.revision != storyline.revision {
            return Err(DialogueError::StaleSpan {
                captured: request.revision,
                current: storyline.revision,
            });
        }
        let selected = storyline.slice(request.start, request.end)?;
        let retrieved = self.index.retrieve(self.gw, &selected, self.config.retrieval_depth)?;
        let req = CompletionRequest::new(TemplateId::InlineFeedback)
            .var("channel_name", self.corpus.name.clone())
            .var("mode", request.mode.as_str())
            .var("profile", persona.profile_text())
            .var("context", render_context(&retrieved))
            .var("plot_content", storyline.body.clone())
            .var("text", selected);
        let text = self.gw.complete(&req)?.text.trim().to_string();
        let anchor = SpanAnchor {
            storyline_id: storyline.storyline_id.clone(),
            revision: storyline.revision,
            start: request.start,
            end: request.end,
            mode: request.mode,
        };
        session.push_creator(request.mode.prompt_label(), Some(anchor.clone()));
        let message = session
            .push_persona(persona, &text, Some(anchor), self.config.inline_word_limit, &self.matcher())
            .clone();
        let mut flags = Vec::new();
        Self::length_flag(message.length_check.as_ref().expect("set"), &mut flags);
        Ok(Reply {
            message,
            retrieved,
            flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{corpus, video};
    use crate::distill::VideoDigest;
    use crate::gateway::{FnProvider, GatewayPolicy, ProviderError, StubProvider};
    use crate::persona::fixtures::profile;
    use parking_lot::Mutex;
    use std::sync::Arc;

    fn world() -> (ChannelCorpus, Vec<VideoDigest>) {
        let mut c = corpus(vec![video("v1", vec![]), video("v2", vec![]), video("v3", vec![]), video("v4", vec![])]);
        let titles = ["Balcony Tomatoes 101", "Compost Without Smell", "Winter Pruning Guide", "Seed Swap Day"];
        for (v, t) in c.videos.iter_mut().zip(titles) {
            v.title = t.into();
        }
        let digests = c
            .videos
            .iter()
            .map(|v| VideoDigest {
                video_id: v.video_id.clone(),
                transcript_summary: format!("Summary of {}", v.title),
                observation_summary: String::new(),
                flags: vec![],
            })
            .collect();
        (c, digests)
    }

    fn fixed_session() -> ChatSession {
        let mut s = ChatSession::new("s1", Phase::Exploration);
        s.clock = Clock::Fixed("2026-01-01T00:00:00Z".parse().unwrap());
        s
    }

    #[test]
    fn chat_round_trip_records_history_and_checks() {
        let (c, d) = world();
        let gw = Gateway::stub();
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let mut s = fixed_session();
        let p = profile("Robin");
        let r = dl.chat(&mut s, &p, "Why do you watch my videos?").unwrap();
        assert_eq!(s.history().len(), 2);
        assert_eq!(s.history()[0].role, Role::Creator);
        assert_eq!(r.message.persona_id.as_deref(), Some(p.persona_id.as_str()));
        assert_eq!(r.message.verdict.as_ref().unwrap().verdict, Verdict::Grounded);
        assert_eq!(r.message.length_check, Some(ResponseCheck::Pass));
        assert_eq!(r.retrieved.len(), 3);
        dl.chat(&mut s, &p, "What else?").unwrap();
        assert_eq!(s.history().len(), 4);
    }

    #[test]
    fn prompt_has_job_and_exactly_m_summaries() {
        let (c, d) = world();
        let seen = Arc::new(Mutex::new(Vec::<String>::new()));
        let sink = seen.clone();
        let gw = Gateway::new(
            Arc::new(FnProvider::new(move |_, prompt| {
                sink.lock().push(prompt.to_string());
                Ok("fine".into())
            })),
            Arc::new(StubProvider::new()),
            GatewayPolicy::default(),
        );
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let p = profile("Robin");
        dl.chat(&mut fixed_session(), &p, "Why do you watch my videos?").unwrap();
        let prompt = seen.lock()[0].clone();
        assert!(prompt.contains(&p.job));
        assert_eq!(prompt.matches("Summary of ").count(), 3);
        // First turn: the history slot is empty.
        assert!(prompt.contains("chat history between you and me:\n\n"));
    }

    #[test]
    fn oversize_history_truncated_oldest_first() {
        let (c, d) = world();
        let gw = Gateway::new(
            Arc::new(StubProvider::new()),
            Arc::new(StubProvider::new()),
            GatewayPolicy {
                context_window: 1500,
                ..GatewayPolicy::default()
            },
        );
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let mut s = fixed_session();
        let p = profile("Robin");
        let long = "tell me more about pruning ".repeat(40);
        let mut truncated = false;
        for _ in 0..6 {
            let r = dl.chat(&mut s, &p, &long).unwrap();
            truncated |= r.flags.iter().any(|f| matches!(f, Flag::HistoryTruncated { .. }));
        }
        assert!(truncated);
        assert_eq!(s.history().len(), 12);
    }

    #[test]
    fn plot_review_one_reply_each_and_partial_failure() {
        let (c, d) = world();
        let gw = Gateway::new(
            Arc::new(FnProvider::new(|req, _| {
                if req.get("profile").unwrap_or("").contains("Name: Bad") {
                    Err(ProviderError::Fatal("boom".into()))
                } else {
                    Ok("Too slow at the start.".into())
                }
            })),
            Arc::new(StubProvider::new()),
            GatewayPolicy::default(),
        );
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let story = Storyline::new("st1", "tomatoes", "Open with the harvest, then explain soil.");
        let personas = vec![profile("A"), profile("Bad"), profile("C")];
        let mut s = fixed_session();
        let review = dl.plot_review(&mut s, &personas, &story, None).unwrap();
        assert_eq!(review.replies.len(), 2);
        assert!(matches!(&review.flags[..], [Flag::PersonaReplyFailed { .. }]));
        assert_eq!(s.history().len(), 3);
        let empty = Storyline::new("st2", "t", "   ");
        assert!(dl.plot_review(&mut s, &personas, &empty, None).is_err());
    }

    #[test]
    fn inline_feedback_modes_spans_and_staleness() {
        let (c, d) = world();
        let gw = Gateway::stub();
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let p = profile("Robin");
        let mut story = Storyline::new("st1", "tomatoes", "첫 장면: 수확. Then soil prep.");
        let mut s = fixed_session();
        let req = |mode, rev, start, end| FeedbackRequest {
            persona_id: p.persona_id.clone(),
            storyline_id: "st1".into(),
            revision: rev,
            start,
            end,
            mode,
        };
        let eval = dl.inline_feedback(&mut s, &p, &story, &req(FeedbackMode::Evaluation, 1, 0, 9)).unwrap();
        assert!(eval.message.text.starts_with("Evaluation"));
        assert_eq!(eval.message.anchor.as_ref().unwrap().mode, FeedbackMode::Evaluation);
        let sugg = dl.inline_feedback(&mut s, &p, &story, &req(FeedbackMode::Suggestion, 1, 10, 15)).unwrap();
        assert!(sugg.message.text.starts_with("Suggestion"));
        assert_eq!(s.history().len(), 4);

        let len = story.char_len();
        assert!(matches!(
            dl.inline_feedback(&mut s, &p, &story, &req(FeedbackMode::Suggestion, 1, 0, len + 1)),
            Err(DialogueError::InvalidSpan { .. })
        ));
        story.patch(1, "rewritten draft").unwrap();
        assert!(matches!(
            dl.inline_feedback(&mut s, &p, &story, &req(FeedbackMode::Suggestion, 1, 0, 3)),
            Err(DialogueError::StaleSpan { captured: 1, current: 2 })
        ));
        assert_eq!(s.history().len(), 4);
    }

    #[test]
    fn patch_counter_and_cas() {
        let mut st = Storyline::new("st", "t", "a");
        st.patch(1, "b").unwrap();
        st.patch(2, "c").unwrap();
        assert_eq!(st.revision, 3);
        assert!(st.patch(2, "d").is_err());
        assert_eq!(st.body, "c");
    }

    #[test]
    fn jsonl_replay_reproduces_history() {
        let (c, d) = world();
        let gw = Gateway::stub();
        let index = build_index(&gw, &c, &d).unwrap().index;
        let config = DialogueConfig::default();
        let dl = Dialogue {
            gw: &gw,
            corpus: &c,
            index: &index,
            config: &config,
        };
        let run = || {
            let mut s = fixed_session();
            let p = profile("Robin");
            dl.chat(&mut s, &p, "Why do you watch my videos?").unwrap();
            dl.chat(&mut s, &p, "Which video helped most?").unwrap();
            s
        };
        let a = run();
        let b = run();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let text = a.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        let back = ChatSession::from_jsonl("s1", Phase::Exploration, &text).unwrap();
        assert_eq!(back.history(), a.history());
        assert_eq!(back.persona_ids, vec!["persona-Robin".to_string()]);
    }
}
