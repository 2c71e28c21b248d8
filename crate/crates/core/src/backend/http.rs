//! Chat-completion client.
//!
//! Request body: `{"model", "messages": [{"role": "system", ...}, {"role": "user", ...}], "temperature"}`.
//! The reply text is `choices[0].message.content`.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{BackendError, RawRecommendation, RecommendationRequest, Recommender};
use crate::prompt::{build_prompt, PromptConfig, PromptPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    /// Extra attempts after the first one.
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Environment variable holding the bearer token; no auth header when unset.
    pub api_key_env: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "recommender".to_string(),
            temperature: 0.0,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
            api_key_env: "KGADAPT_API_KEY".to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.free.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    cfg: HttpConfig,
    prompt: PromptConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
    gate: Gate,
    id: String,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig, prompt: PromptConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs.max(0.001)))
            .build()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        let token = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|t| !t.is_empty());
        let id = format!("http:{}@{}", cfg.model, cfg.endpoint);
        Ok(HttpBackend {
            gate: Gate {
                free: Mutex::new(cfg.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            cfg,
            prompt,
            client,
            token,
            id,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn attempt(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &prompt.system_message,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user_message,
                },
            ],
            temperature: self.cfg.temperature,
        };
        let mut request = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Network(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| BackendError::Malformed("no choice content".to_string()))
    }

    /// Sends a prompt with bounded retries and exponential backoff.
    pub fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let _slot = self.gate.acquire();
        let attempts = self.cfg.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    let delay = Duration::from_millis(
                        self.cfg
                            .backoff_ms
                            .saturating_mul(1 << (attempt - 1).min(16)),
                    );
                    warn!("attempt {attempt}/{attempts} failed: {e}; retrying in {delay:?}");
                    thread::sleep(delay);
                }
                Err(e) if attempt > 1 => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Recommender for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn recommend(
        &self,
        req: &RecommendationRequest<'_>,
    ) -> Result<RawRecommendation, BackendError> {
        let start = Instant::now();
        let prompt = build_prompt(req.pkg, req.query, req.baseline_bias, &self.prompt);
        debug!("querying {} for user {}", self.cfg.endpoint, req.user_id());
        let text = self.complete(&prompt)?;
        Ok(RawRecommendation {
            text,
            backend_id: self.id.clone(),
            latency: start.elapsed(),
        })
    }
}
