//! OpenAI-compatible chat-completions and embeddings over HTTP.

use serde::Deserialize;
use serde_json::json;

use super::{CompletionProvider, CompletionRequest, EmbeddingProvider, ProviderConfig, ProviderError};

pub struct OpenAiProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl OpenAiProvider {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        OpenAiProvider { config, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<ureq::Response, ProviderError> {
        let mut req = self.agent.post(&self.url(path));
        if !self.config.api_key.is_empty() {
            req = req.set("Authorization", &format!("Bearer {}", self.config.api_key));
        }
        match req.send_json(body) {
            Ok(resp) => Ok(resp),
            Err(ureq::Error::Status(429, _)) => Err(ProviderError::RateLimited),
            Err(ureq::Error::Status(code, resp)) if code >= 500 || code == 408 => Err(
                ProviderError::Transient(format!("HTTP {code}: {}", resp.into_string().unwrap_or_default())),
            ),
            Err(ureq::Error::Status(code, resp)) => Err(ProviderError::Fatal(format!(
                "HTTP {code}: {}",
                resp.into_string().unwrap_or_default()
            ))),
            Err(ureq::Error::Transport(t)) => Err(ProviderError::Transient(t.to_string())),
        }
    }
}

impl CompletionProvider for OpenAiProvider {
    fn complete(&self, request: &CompletionRequest, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{ "role": "user", "content": prompt }],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        let resp: ChatResponse = self
            .post("chat/completions", body)?
            .into_json()
            .map_err(|e| ProviderError::Transient(format!("malformed response: {e}")))?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transient("response has no content".into()))
    }
}

impl EmbeddingProvider for OpenAiProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({ "model": self.config.embedding_model, "input": texts });
        let mut resp: EmbeddingResponse = self
            .post("embeddings", body)?
            .into_json()
            .map_err(|e| ProviderError::Transient(format!("malformed response: {e}")))?;
        resp.data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, GatewayError, GatewayPolicy, TemplateId};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    /// Serves canned (status, body) pairs in order, recording request bodies.
    fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(format!("{head}{}", String::from_utf8_lossy(&buf)));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn provider(endpoint: String) -> Arc<OpenAiProvider> {
        Arc::new(OpenAiProvider::new(ProviderConfig {
            endpoint,
            api_key: "sk-test".into(),
            timeout: Duration::from_secs(5),
            ..ProviderConfig::default()
        }))
    }

    #[test]
    fn chat_completion_wire_format() {
        let (url, seen) = fake_server(vec![
            (503, "{}".into()),
            (200, r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{}}"#.into()),
        ]);
        let p = provider(url);
        let gw = Gateway::new(
            p.clone(),
            p,
            GatewayPolicy {
                backoff_base: Duration::ZERO,
                ..GatewayPolicy::default()
            },
        );
        let req = CompletionRequest::new(TemplateId::TranscriptSummary).var("transcript", "abc");
        let out = gw.complete(&req).unwrap();
        assert_eq!(out.text, "hello");
        assert_eq!(out.attempts, 2);
        let log = seen.lock().unwrap();
        assert!(log[1].starts_with("POST /v1/chat/completions"));
        assert!(log[1].contains("Bearer sk-test"));
        assert!(log[1].contains("\"temperature\":0.3"));
        assert!(log[1].contains("INPUT: abc"));
    }

    #[test]
    fn embeddings_are_reordered_and_normalized() {
        let (url, _) = fake_server(vec![(
            200,
            r#"{"data":[{"index":1,"embedding":[0.0,2.0]},{"index":0,"embedding":[3.0,4.0]}]}"#.into(),
        )]);
        let p = provider(url);
        let gw = Gateway::new(p.clone(), p, GatewayPolicy::default());
        let v = gw.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v[0].values, vec![0.6, 0.8]);
        assert_eq!(v[1].values, vec![0.0, 1.0]);
    }

    #[test]
    fn client_errors_are_fatal() {
        let (url, _) = fake_server(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let p = provider(url);
        let gw = Gateway::new(p.clone(), p, GatewayPolicy::default());
        let req = CompletionRequest::new(TemplateId::TranscriptSummary).var("transcript", "abc");
        assert!(matches!(gw.complete(&req), Err(GatewayError::ProviderUnavailable(m)) if m.contains("401")));
    }
}
