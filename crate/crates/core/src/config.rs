//! Run settings. Values come from built-in defaults, then an optional TOML or
//! JSON file, then command-line flags, each layer overriding the previous.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::HttpConfig;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Read { path: String, message: String },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Off,
    /// BM25 over corpus passages.
    #[default]
    Lexical,
    /// Embedding cosine over corpus passages.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub http: HttpConfig,
    /// Used only when a corpus is given.
    pub retrieval_mode: RetrievalMode,
    /// Embedding service; the built-in trigram embedder is used when unset.
    pub embedder_url: Option<String>,
    /// Evaluation drops aligned pairs below this similarity; unset keeps all.
    pub match_threshold: Option<f64>,
}

impl Settings {
    /// Defaults overlaid with `path`, parsed as JSON for `.json` files and
    /// TOML otherwise. Keys absent from the file keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: shown.clone(),
            message: e.to_string(),
        })?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ConfigError::Parse { path: shown, message })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.http.max_attempts == 0 {
            return Err(ConfigError::Invalid("http.max_attempts must be positive".into()));
        }
        if let Some(t) = self.match_threshold {
            if !(-1.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid("match_threshold must lie in [-1, 1]".into()));
            }
        }
        Ok(())
    }
}
