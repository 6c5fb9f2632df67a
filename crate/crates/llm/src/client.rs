//! Chat-completions transport with retries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EndpointConfig;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON POST. Implementations only move bytes; retry policy lives
/// in [`Client`].
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpReply, String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpReply, String> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Message {
    pub role: &'static str,
    pub content: String,
}

#[derive(Debug, Clone, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<Message>,
    temperature: f64,
    n: usize,
    logprobs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u32>,
}

/// One user-turn request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub n: usize,
    /// Overrides the endpoint temperature.
    pub temperature: Option<f64>,
    /// Ask for alternatives at each token.
    pub top_logprobs: bool,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, n: usize) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            n,
            temperature: None,
            top_logprobs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct WireChoice {
    #[serde(default)]
    index: usize,
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

/// One completion: its text and, when the endpoint sent them, per-token
/// logprobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub text: String,
    pub tokens: Option<Vec<TokenLogprob>>,
}

pub struct Client {
    cfg: EndpointConfig,
    transport: Box<dyn Transport>,
    retries: AtomicUsize,
    requests: AtomicUsize,
}

impl Client {
    pub fn new(cfg: EndpointConfig, transport: Box<dyn Transport>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(Client {
            cfg,
            transport,
            retries: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        })
    }

    pub fn http(cfg: EndpointConfig) -> Result<Self, LlmError> {
        let timeout = Duration::from_secs(cfg.timeout_secs.max(1));
        Client::new(cfg, Box::new(HttpTransport::new(timeout)))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Retries issued so far.
    pub fn retries(&self) -> usize {
        self.retries.load(Ordering::Relaxed)
    }

    /// HTTP requests issued so far, including retries.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// Sends `req` and returns its choices ordered by choice index. Server
    /// errors (5xx, 429) and transport failures are retried with jittered
    /// exponential backoff; other statuses fail immediately.
    pub fn chat(&self, req: &ChatRequest) -> Result<Vec<Choice>, LlmError> {
        let wire = WireRequest {
            model: &self.cfg.model,
            messages: vec![Message {
                role: "user",
                content: req.prompt.clone(),
            }],
            temperature: req.temperature.unwrap_or(self.cfg.temperature),
            n: req.n.max(1),
            logprobs: true,
            top_logprobs: req.top_logprobs.then_some(self.cfg.top_logprobs),
        };
        let body = serde_json::to_string(&wire).expect("request serializes");
        let url = self.cfg.chat_url();
        let attempts = self.cfg.retry.max_attempts;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                let nominal = self.cfg.retry.delay(attempt - 1);
                let jitter = rand::rng().random_range(0.5..1.5);
                std::thread::sleep(nominal.mul_f64(jitter));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self
                .transport
                .post_json(&url, self.cfg.api_key.as_deref(), &body)
            {
                Ok(reply) if reply.status == 200 => return parse_choices(&reply.body),
                Ok(reply) if reply.status >= 500 || reply.status == 429 => {
                    last = format!("HTTP {}: {}", reply.status, reply.body);
                }
                Ok(reply) => {
                    return Err(LlmError::Status {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(e) => last = e,
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last,
        })
    }
}

fn parse_choices(body: &str) -> Result<Vec<Choice>, LlmError> {
    let mut resp: WireResponse =
        serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    if resp.choices.is_empty() {
        return Err(LlmError::Malformed("no choices".into()));
    }
    resp.choices.sort_by_key(|c| c.index);
    Ok(resp
        .choices
        .into_iter()
        .map(|c| Choice {
            text: c.message.content.unwrap_or_default(),
            tokens: c.logprobs.and_then(|l| l.content).filter(|t| !t.is_empty()),
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::VecDeque;
    use std::sync::Mutex;

    /// Replays scripted replies and records request bodies.
    pub struct Scripted {
        pub replies: Mutex<VecDeque<Result<HttpReply, String>>>,
        pub bodies: Mutex<Vec<String>>,
    }

    impl Scripted {
        pub fn new(replies: Vec<Result<HttpReply, String>>) -> Self {
            Scripted {
                replies: Mutex::new(replies.into()),
                bodies: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for std::sync::Arc<Scripted> {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            body: &str,
        ) -> Result<HttpReply, String> {
            self.bodies.lock().unwrap().push(body.to_string());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or(Err("script exhausted".into()))
        }
    }

    pub fn ok(body: &str) -> Result<HttpReply, String> {
        Ok(HttpReply {
            status: 200,
            body: body.into(),
        })
    }

    pub fn fast_config() -> EndpointConfig {
        EndpointConfig {
            retry: crate::config::RetryPolicy {
                max_attempts: 3,
                backoff_base_ms: 1,
            },
            ..EndpointConfig::default()
        }
    }

    const PARIS: &str = r#"{"choices":[{"index":0,"message":{"content":"Paris"},"logprobs":{"content":[{"token":"Paris","logprob":-0.10536051565782628,"top_logprobs":[]}]}}]}"#;

    #[test]
    fn retries_server_errors() {
        let script = std::sync::Arc::new(Scripted::new(vec![
            Ok(HttpReply {
                status: 500,
                body: "boom".into(),
            }),
            ok(PARIS),
        ]));
        let client = Client::new(fast_config(), Box::new(script.clone())).unwrap();
        let choices = client.chat(&ChatRequest::new("q", 1)).unwrap();
        assert_eq!(choices[0].text, "Paris");
        assert_eq!(client.retries(), 1);
        assert_eq!(client.requests(), 2);
        let body: serde_json::Value =
            serde_json::from_str(&script.bodies.lock().unwrap()[0]).unwrap();
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["n"], 1);
        assert!(body.get("top_logprobs").is_none());
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let fail = || {
            Ok(HttpReply {
                status: 503,
                body: String::new(),
            })
        };
        let script = std::sync::Arc::new(Scripted::new(vec![fail(), fail(), fail(), ok(PARIS)]));
        let client = Client::new(fast_config(), Box::new(script)).unwrap();
        assert!(matches!(
            client.chat(&ChatRequest::new("q", 1)),
            Err(LlmError::Transport { attempts: 3, .. })
        ));
        let script = std::sync::Arc::new(Scripted::new(vec![Ok(HttpReply {
            status: 401,
            body: "no".into(),
        })]));
        let client = Client::new(fast_config(), Box::new(script)).unwrap();
        assert!(matches!(
            client.chat(&ChatRequest::new("q", 1)),
            Err(LlmError::Status { status: 401, .. })
        ));
    }

    #[test]
    fn malformed_reply() {
        let script = std::sync::Arc::new(Scripted::new(vec![ok("{\"choices\":[]}")]));
        let client = Client::new(fast_config(), Box::new(script)).unwrap();
        assert!(matches!(
            client.chat(&ChatRequest::new("q", 1)),
            Err(LlmError::Malformed(_))
        ));
    }
}
