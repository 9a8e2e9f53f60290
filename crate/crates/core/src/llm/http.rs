//! OpenAI-compatible chat-completion client.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{GenerationRequest, Generator, LlmConfig};
use crate::concurrency::Semaphore;
use crate::error::{Error, Result};

pub struct HttpChatBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    in_flight: Semaphore,
    retry_limit: u32,
    backoff: Duration,
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

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpChatBackend {
    pub fn new(config: &LlmConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::invalid(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Ok(Self {
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            api_key,
            agent,
            in_flight: Semaphore::new(config.max_concurrency),
            retry_limit: config.retry_limit,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    fn attempt(&self, request: &GenerationRequest) -> std::result::Result<String, Attempt> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let _permit = self.in_flight.acquire();
        match call.send_json(body) {
            Ok(resp) => {
                let parsed: ChatResponse =
                    resp.into_json().map_err(|e| Attempt::Fatal(format!("bad chat response: {e}")))?;
                let choice = parsed.choices.into_iter().next().ok_or_else(|| Attempt::Fatal("no choices".into()))?;
                Ok(choice.message.content.unwrap_or_default())
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", text.chars().take(200).collect::<String>());
                if code == 429 || code >= 500 {
                    Err(Attempt::Retry(msg))
                } else {
                    Err(Attempt::Fatal(msg))
                }
            }
            Err(e) => Err(Attempt::Retry(e.to_string())),
        }
    }
}

impl Generator for HttpChatBackend {
    /// Retries transport errors, 429 and 5xx with exponential backoff.
    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(msg)) => return Err(Error::Backend(msg)),
                Err(Attempt::Retry(msg)) if attempt >= self.retry_limit => {
                    return Err(Error::Backend(format!("{msg} (after {} attempts)", attempt + 1)))
                }
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat request failed ({msg}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}
