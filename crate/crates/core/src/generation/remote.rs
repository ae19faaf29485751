//! Client for an OpenAI-style completions endpoint.

use std::sync::OnceLock;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{GenerationBackend, GenerationConfig, GenerationError};

pub const API_URL_ENV: &str = "LQB_API_URL";
pub const API_KEY_ENV: &str = "LQB_API_KEY";

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

pub struct RemoteCompletionBackend {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    client: OnceLock<Client>,
}

impl std::fmt::Debug for RemoteCompletionBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteCompletionBackend")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl RemoteCompletionBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            timeout,
            client: OnceLock::new(),
        }
    }

    /// Endpoint and key from `LQB_API_URL` / `LQB_API_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self, GenerationError> {
        let endpoint = std::env::var(API_URL_ENV)
            .map_err(|_| GenerationError::Backend(format!("{API_URL_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self::new(endpoint, key, timeout))
    }

    fn client(&self) -> Result<&Client, GenerationError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }
}

impl Drop for RemoteCompletionBackend {
    fn drop(&mut self) {
        // A blocking client must not be dropped on an async runtime thread.
        if let Some(client) = self.client.take() {
            std::thread::spawn(move || drop(client));
        }
    }
}

impl GenerationBackend for RemoteCompletionBackend {
    fn backend_id(&self) -> &str {
        &self.endpoint
    }

    fn complete(
        &self,
        prompt_text: &str,
        config: &GenerationConfig,
    ) -> Result<String, GenerationError> {
        let body = CompletionRequest {
            model: &config.model_id,
            prompt: prompt_text,
            temperature: config.temperature,
            top_p: config.top_p,
            frequency_penalty: config.frequency_penalty,
            presence_penalty: config.presence_penalty,
            max_tokens: config.max_tokens,
        };
        let mut req = self.client()?.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GenerationError::Timeout(self.timeout)
            } else {
                GenerationError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GenerationError::Http {
                status: status.as_u16(),
                body: resp.text().unwrap_or_default(),
            });
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| GenerationError::Protocol(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GenerationError::Protocol("response has no choices".into()))?;
        choice
            .text
            .or(choice.message.map(|m| m.content))
            .ok_or_else(|| GenerationError::Protocol("choice carries no text".into()))
    }
}
