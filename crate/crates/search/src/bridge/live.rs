use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BridgeError, LlmResponse, OpKind};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Concurrent requests in flight.
    pub max_in_flight: usize,
    /// Wait before each retry; the length is the retry count.
    pub retry_delays_ms: Vec<u64>,
    pub request_timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            temperature: 1.0,
            max_in_flight: 4,
            retry_delays_ms: vec![1000, 4000],
            request_timeout_secs: 120,
        }
    }
}

/// Blocking chat-completions client. Each slot is its own request with
/// `n = 1`, so one failing slot does not take its siblings down.
#[derive(Debug)]
pub struct LiveClient {
    cfg: LiveConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
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
    content: Option<String>,
}

impl LiveClient {
    /// Reads the API key from the environment; a missing key is allowed for
    /// local endpoints.
    pub fn new(cfg: LiveConfig) -> Result<Self, BridgeError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(cfg, key)
    }

    pub fn with_api_key(cfg: LiveConfig, api_key: Option<String>) -> Result<Self, BridgeError> {
        if cfg.max_in_flight == 0 {
            return Err(BridgeError::Config("max_in_flight must be positive".into()));
        }
        if cfg.base_url.is_empty() || cfg.model.is_empty() {
            return Err(BridgeError::Config("base_url and model are required".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_secs))
            .build()
            .map_err(|e| BridgeError::Config(e.to_string()))?;
        Ok(LiveClient { cfg, api_key, http })
    }

    pub fn config(&self) -> &LiveConfig {
        &self.cfg
    }

    fn call(&self, prompt: &str) -> Result<String, String> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.cfg.model,
            "messages": [{ "role": "user", "content": prompt }],
            "n": 1,
            "temperature": self.cfg.temperature,
        });
        let mut req = self.http.post(url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "response has no message content".to_string())
    }

    /// One completion with retries; `None` once every attempt has failed.
    pub fn complete_one(&self, prompt: &str) -> Option<String> {
        let mut attempt = 0;
        loop {
            match self.call(prompt) {
                Ok(text) => return Some(text),
                Err(e) => {
                    let Some(&delay) = self.cfg.retry_delays_ms.get(attempt) else {
                        log::warn!("completion failed after {} attempts: {e}", attempt + 1);
                        return None;
                    };
                    log::debug!("completion attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    pub fn complete_all(
        &self,
        gen: usize,
        prompts: &[(OpKind, String)],
        parallelism: usize,
    ) -> Vec<LlmResponse> {
        let jobs: Vec<(OpKind, usize, &str)> = prompts
            .iter()
            .flat_map(|(op, p)| (0..parallelism).map(move |slot| (*op, slot, p.as_str())))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.max_in_flight)
            .build()
            .expect("thread pool");
        pool.install(|| {
            jobs.par_iter()
                .map(|&(op, slot, prompt)| LlmResponse {
                    gen,
                    op,
                    slot,
                    text: self.complete_one(prompt),
                })
                .collect()
        })
    }
}
