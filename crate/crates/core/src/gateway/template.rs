//! Prompt template assets and the single-pass renderer.
//!
//! Placeholders are `{name}` where `name` is an ASCII identifier. `{{` and
//! `}}` render as literal braces. Any other brace is copied through.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    AudienceSummary,
    TranscriptSummary,
    DimvalExtract,
    CommentClassify,
    PersonaGenerate,
    PersonaCustom,
    Chat,
    PlotFeedback,
    InlineFeedback,
    ValueSuggest,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::AudienceSummary,
        TemplateId::TranscriptSummary,
        TemplateId::DimvalExtract,
        TemplateId::CommentClassify,
        TemplateId::PersonaGenerate,
        TemplateId::PersonaCustom,
        TemplateId::Chat,
        TemplateId::PlotFeedback,
        TemplateId::InlineFeedback,
        TemplateId::ValueSuggest,
    ];

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::AudienceSummary => include_str!("../../templates/audience_summary.txt"),
            TemplateId::TranscriptSummary => {
                include_str!("../../templates/transcript_summary.txt")
            }
            TemplateId::DimvalExtract => include_str!("../../templates/dimval_extract.txt"),
            TemplateId::CommentClassify => include_str!("../../templates/comment_classify.txt"),
            TemplateId::PersonaGenerate => include_str!("../../templates/persona_generate.txt"),
            TemplateId::PersonaCustom => include_str!("../../templates/persona_custom.txt"),
            TemplateId::Chat => include_str!("../../templates/chat.txt"),
            TemplateId::PlotFeedback => include_str!("../../templates/plot_feedback.txt"),
            TemplateId::InlineFeedback => include_str!("../../templates/inline_feedback.txt"),
            TemplateId::ValueSuggest => include_str!("../../templates/value_suggest.txt"),
        }
    }

    /// Structured-output templates decode greedily; generative ones do not.
    pub fn default_temperature(self) -> f64 {
        match self {
            TemplateId::DimvalExtract | TemplateId::CommentClassify => 0.0,
            TemplateId::AudienceSummary | TemplateId::TranscriptSummary => 0.3,
            _ => 0.7,
        }
    }

    pub fn default_max_output_tokens(self) -> u32 {
        match self {
            TemplateId::TranscriptSummary => 700,
            TemplateId::AudienceSummary => 400,
            TemplateId::DimvalExtract => 2000,
            TemplateId::CommentClassify => 2000,
            TemplateId::PersonaGenerate | TemplateId::PersonaCustom => 800,
            TemplateId::Chat | TemplateId::InlineFeedback => 400,
            TemplateId::PlotFeedback => 300,
            TemplateId::ValueSuggest => 200,
        }
    }

    /// Placeholder names the body requires.
    pub fn placeholders(self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for token in tokenize(self.body()) {
            if let Token::Placeholder(name) = token {
                names.insert(name.to_string());
            }
        }
        names
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

enum Token<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn tokenize(body: &str) -> Vec<Token<'_>> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Token::Text(&body[start..i]));
                out.push(Token::Text("{"));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Token::Text(&body[start..i]));
                out.push(Token::Text("}"));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = body[i + 1..].find('}').map(|p| i + 1 + p);
                match close {
                    Some(end) if is_ident(&body[i + 1..end]) => {
                        out.push(Token::Text(&body[start..i]));
                        out.push(Token::Placeholder(&body[i + 1..end]));
                        i = end + 1;
                        start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    out.push(Token::Text(&body[start..]));
    out
}

/// Substitutes every placeholder in one pass. Bound values are inserted
/// verbatim, so braces inside them are never expanded. Extra bindings are
/// ignored.
pub fn render_str(body: &str, variables: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(body.len());
    for token in tokenize(body) {
        match token {
            Token::Text(t) => out.push_str(t),
            Token::Placeholder(name) => match variables.get(name) {
                Some(v) => out.push_str(v),
                None => return Err(GatewayError::MissingVariable(name.to_string())),
            },
        }
    }
    Ok(out)
}

pub fn render_template(
    template: TemplateId,
    variables: &BTreeMap<String, String>,
) -> Result<String, GatewayError> {
    render_str(template.body(), variables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind_all(t: TemplateId) -> BTreeMap<String, String> {
        t.placeholders()
            .into_iter()
            .map(|n| (n.clone(), format!("<{n}>")))
            .collect()
    }

    #[test]
    fn chat_mentions_word_limit() {
        let mut vars = BTreeMap::new();
        for (k, v) in [
            ("channel_name", "Monica's Garden"),
            ("video_title", "Balcony herbs"),
            ("profile", "Diane"),
            ("context", ""),
            ("chat_history", ""),
            ("new_input", "Why do you watch my videos?"),
        ] {
            vars.insert(k.to_string(), v.to_string());
        }
        let text = render_template(TemplateId::Chat, &vars).unwrap();
        assert!(text.contains("maximum of 120 words"));
        assert!(text.contains("Why do you watch my videos?"));
    }

    #[test]
    fn plot_feedback_mentions_word_limit() {
        let text = render_template(TemplateId::PlotFeedback, &bind_all(TemplateId::PlotFeedback)).unwrap();
        assert!(text.contains("maximum of 80 words"));
    }

    #[test]
    fn empty_binding_is_a_binding() {
        let mut vars = BTreeMap::new();
        vars.insert("text".to_string(), String::new());
        let text = render_template(TemplateId::DimvalExtract, &vars).unwrap();
        assert!(text.contains("INPUT: \n"));
    }

    #[test]
    fn missing_variable_is_named() {
        let err = render_template(TemplateId::TranscriptSummary, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, GatewayError::MissingVariable(n) if n == "transcript"));
    }

    #[test]
    fn substituted_content_is_not_reexpanded() {
        let mut vars = BTreeMap::new();
        vars.insert("transcript".to_string(), "{transcript} {{x}}".to_string());
        let text = render_template(TemplateId::TranscriptSummary, &vars).unwrap();
        assert!(text.ends_with("INPUT: {transcript} {{x}}\n"));
    }

    #[test]
    fn every_template_renders_without_leftover_placeholders() {
        for t in TemplateId::ALL {
            let vars = bind_all(t);
            let text = render_template(t, &vars).unwrap();
            for name in t.placeholders() {
                assert!(!text.contains(&format!("{{{name}}}")), "{t}: {name}");
            }
        }
    }

    #[test]
    fn escaped_braces_become_literal_json() {
        let text = render_template(TemplateId::PersonaGenerate, &bind_all(TemplateId::PersonaGenerate)).unwrap();
        assert!(text.contains("{\n\"name\": \"Riley\""));
        assert!(!text.contains("{{"));
    }

    #[test]
    fn placeholder_sets() {
        let names: Vec<_> = TemplateId::InlineFeedback.placeholders().into_iter().collect();
        assert_eq!(
            names,
            ["channel_name", "context", "mode", "plot_content", "profile", "text"]
        );
        assert_eq!(
            TemplateId::AudienceSummary.placeholders().into_iter().collect::<Vec<_>>(),
            ["video_description", "viewer_comments"]
        );
    }
}
