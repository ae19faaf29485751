//! Service configuration, read from TOML (or JSON when the file ends in `.json`).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use lqb_core::embedding::{
    EmbeddingProvider, LocalEmbedder, RemoteEmbedder, RemoteEmbedderConfig, RECOMMENDER_MODEL,
};
use lqb_core::recommender::{DEFAULT_EXCERPT_CHARS, DEFAULT_TOP_K};
use lqb_core::retry::RetryPolicy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    /// Falls back to `LQB_EMBED_URL`.
    pub endpoint: Option<String>,
    pub model: String,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Local,
            endpoint: None,
            model: RECOMMENDER_MODEL.to_string(),
        }
    }
}

impl ProviderSettings {
    /// The API key, if any, always comes from `LQB_EMBED_KEY`.
    pub fn build(&self, retry: RetryPolicy) -> anyhow::Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self.kind {
            ProviderKind::Local => Arc::new(LocalEmbedder),
            ProviderKind::Remote => {
                let mut cfg = match &self.endpoint {
                    Some(url) => {
                        let mut cfg = RemoteEmbedderConfig::new(url.clone(), self.model.clone());
                        cfg.api_key = std::env::var(lqb_core::embedding::EMBED_KEY_ENV)
                            .ok()
                            .filter(|k| !k.is_empty());
                        cfg
                    }
                    None => RemoteEmbedderConfig::from_env(self.model.clone())?,
                };
                cfg.model = self.model.clone();
                Arc::new(RemoteEmbedder::new(cfg, retry))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub corpus: PathBuf,
    pub bank: PathBuf,
    pub index: PathBuf,
    #[serde(default = "default_k")]
    pub k_default: usize,
    #[serde(default = "default_excerpt")]
    pub excerpt_chars: usize,
    /// Exact origins allowed to call the API from a browser; empty disables CORS.
    #[serde(default)]
    pub cors_allowlist: Vec<String>,
    /// Directory of built web assets served at `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub provider: ProviderSettings,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

fn default_excerpt() -> usize {
    DEFAULT_EXCERPT_CHARS
}

impl ServiceConfig {
    pub fn new(corpus: PathBuf, bank: PathBuf, index: PathBuf) -> Self {
        Self {
            listen: default_listen(),
            corpus,
            bank,
            index,
            k_default: DEFAULT_TOP_K,
            excerpt_chars: DEFAULT_EXCERPT_CHARS,
            cors_allowlist: Vec::new(),
            static_dir: None,
            provider: ProviderSettings::default(),
        }
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ServiceConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?
        };
        if let Some(base) = path.parent() {
            for p in [&mut cfg.corpus, &mut cfg.bank, &mut cfg.index] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if let Some(s) = cfg.static_dir.as_mut().filter(|s| s.is_relative()) {
                *s = base.join(&*s);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k_default < 1 {
            bail!("k_default must be at least 1");
        }
        if self.excerpt_chars < 1 {
            bail!("excerpt_chars must be at least 1");
        }
        if !self.corpus.is_dir() {
            bail!("corpus directory {} does not exist", self.corpus.display());
        }
        for (what, p) in [("bank", &self.bank), ("index", &self.index)] {
            if !p.is_file() {
                bail!("{what} file {} does not exist", p.display());
            }
        }
        if let Some(dir) = &self.static_dir {
            if !dir.is_dir() {
                bail!("static directory {} does not exist", dir.display());
            }
        }
        Ok(())
    }
}
