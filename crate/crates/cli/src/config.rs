//! Experiment configuration: a TOML file whose values command-line flags
//! override.

use std::path::{Path, PathBuf};

use mill_core::cache::BackendKind;
use mill_core::embed::MOCK_DIM;
use mill_core::{ExpansionConfig, InputFormat};
use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_COMPLETION_ENDPOINT: &str = "https://api.openai.com/v1/completions";
pub const DEFAULT_EMBEDDING_ENDPOINT: &str = "https://api.openai.com/v1/embeddings";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-ada-002";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub completion_endpoint: String,
    pub embedding_endpoint: String,
    pub embedding_model: String,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    /// Word list for the mock generator, one or more words per line.
    pub mock_vocab: Option<PathBuf>,
    pub mock_dim: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            completion_endpoint: DEFAULT_COMPLETION_ENDPOINT.into(),
            embedding_endpoint: DEFAULT_EMBEDDING_ENDPOINT.into(),
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            cache_dir: None,
            max_in_flight: 8,
            mock_vocab: None,
            mock_dim: MOCK_DIM,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<String>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Seeds every mock backend.
    pub seed: u64,
    /// Worker threads; 0 uses every CPU.
    pub threads: usize,
    pub strict: bool,
    pub tag: Option<String>,
    pub backend: BackendConfig,
    pub expansion: ExpansionConfig,
}

impl ExperimentConfig {
    /// Relative paths in the file are taken relative to the file itself.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.corpus,
            &mut cfg.queries,
            &mut cfg.qrels,
            &mut cfg.index,
            &mut cfg.output_dir,
            &mut cfg.backend.cache_dir,
            &mut cfg.backend.mock_vocab,
        ] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn corpus_format(&self, corpus: &Path) -> Result<InputFormat, Failure> {
        match &self.corpus_format {
            Some(f) => f.parse().map_err(Failure::Core),
            None => Ok(InputFormat::from_path(corpus)),
        }
    }
}

/// Fails with a configuration error unless `path` exists.
pub fn existing(path: Option<&PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    let p = path.ok_or_else(|| Failure::Config(format!("no {what} given")))?;
    if !p.exists() {
        return Err(Failure::Config(format!("{what} {} does not exist", p.display())));
    }
    Ok(p.clone())
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let words: Vec<String> = text.split_whitespace().map(String::from).collect();
    if words.is_empty() {
        return Err(Failure::Config(format!("{}: empty vocabulary", path.display())));
    }
    Ok(words)
}
