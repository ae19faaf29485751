//! Client for an OpenAI-style embeddings endpoint:
//! `POST {model, input: [texts]}` → `{data: [{embedding: [floats]}]}`.

use std::sync::{Condvar, Mutex, OnceLock};

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::retry::RetryPolicy;

pub const EMBED_URL_ENV: &str = "LQB_EMBED_URL";
pub const EMBED_KEY_ENV: &str = "LQB_EMBED_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_batch_size() -> usize {
    64
}

fn default_max_in_flight() -> usize {
    4
}

impl RemoteEmbedderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            batch_size: default_batch_size(),
            max_in_flight: default_max_in_flight(),
        }
    }

    /// Endpoint and key from `LQB_EMBED_URL` / `LQB_EMBED_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, EmbedError> {
        let endpoint = std::env::var(EMBED_URL_ENV)
            .map_err(|_| EmbedError::NotConfigured(format!("{EMBED_URL_ENV} is not set")))?;
        let mut cfg = Self::new(endpoint, model);
        cfg.api_key = std::env::var(EMBED_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

/// Counting semaphore bounding concurrent requests.
struct RequestPool {
    free: Mutex<usize>,
    cv: Condvar,
}

impl RequestPool {
    fn new(size: usize) -> Self {
        Self {
            free: Mutex::new(size.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PoolGuard<'_> {
        let mut free = self.free.lock().expect("pool lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("pool lock");
        }
        *free -= 1;
        PoolGuard(self)
    }
}

struct PoolGuard<'a>(&'a RequestPool);

impl Drop for PoolGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("pool lock") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    retry: RetryPolicy,
    pool: RequestPool,
    client: OnceLock<Client>,
    dim: OnceLock<usize>,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig, retry: RetryPolicy) -> Self {
        Self {
            pool: RequestPool::new(config.max_in_flight),
            config,
            retry,
            client: OnceLock::new(),
            dim: OnceLock::new(),
        }
    }

    fn client(&self) -> Result<&Client, EmbedError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let c = Client::builder()
            .timeout(self.retry.timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(self.client.get_or_init(|| c))
    }

    fn request(&self, batch: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let client = self.client()?;
        let body = EmbedRequest {
            model: &self.config.model,
            input: batch,
        };
        let _permit = self.pool.acquire();
        let result = self.retry.run(EmbedError::is_unavailable, |_| {
            let mut req = client.post(&self.config.endpoint).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .map_err(|e| EmbedError::Transport(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(EmbedError::Http {
                    status: status.as_u16(),
                    body: resp.text().unwrap_or_default(),
                });
            }
            resp.json::<EmbedResponse>()
                .map_err(|e| EmbedError::Protocol(e.to_string()))
        });
        let mut data = result.map(|(r, _)| r.data).map_err(|(e, _)| e)?;
        if data.len() != batch.len() {
            return Err(EmbedError::Protocol(format!(
                "sent {} texts, received {} embeddings",
                batch.len(),
                data.len()
            )));
        }
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

impl Drop for RemoteEmbedder {
    fn drop(&mut self) {
        // A blocking client must not be dropped on an async runtime thread.
        if let Some(client) = self.client.take() {
            std::thread::spawn(move || drop(client));
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size.max(1)) {
            for values in self.request(batch)? {
                let expected = *self.dim.get_or_init(|| values.len());
                if values.len() != expected {
                    return Err(EmbedError::DimensionDrift {
                        expected,
                        got: values.len(),
                    });
                }
                out.push(EmbeddingVector::new(self.config.model.clone(), values)?);
            }
        }
        Ok(out)
    }
}
