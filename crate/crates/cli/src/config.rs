//! The single TOML file that drives every stage.
//!
//! ```toml
//! corpus = "corpus.jsonl"
//! dialogues = "dialogues.jsonl"
//! demos = "demos.json"
//! output_dir = "out"
//! k = 16
//! seed = 13
//!
//! [llm]
//! base_url = "mock:responses.json"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cqr_core::llm::{LlmConfig, ResponseMode};
use cqr_core::preference::{PreferenceTag, DEFAULT_BETA};
use cqr_core::retriever::IndexConfig;
use cqr_core::similarity::SimilarityConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const INDEX_FILE: &str = "index.bin";
pub const FINGERPRINT_FILE: &str = "index.sha256";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const PREFERENCES_FILE: &str = "preferences.jsonl";
pub const CONSTRUCT_SUMMARY_FILE: &str = "construct_summary.json";
pub const REWRITES_FILE: &str = "rewrites.jsonl";
pub const REWRITE_PROMPTS_FILE: &str = "rewrite_prompts.jsonl";
pub const RUN_FILE: &str = "run.txt";
pub const ANALYSIS_FILE: &str = "analysis.json";

fn default_k() -> usize {
    16
}

fn default_t() -> usize {
    100
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_workers() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_tags() -> Vec<PreferenceTag> {
    PreferenceTag::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Passage collection (JSONL `{"id","text"}`).
    pub corpus: PathBuf,
    /// Dialogue turns (JSONL).
    pub dialogues: PathBuf,
    /// Demonstration pool (JSON `{"rewrite": [...], "response": [...]}`).
    #[serde(default)]
    pub demos: Option<PathBuf>,
    #[serde(default)]
    pub qrels: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Candidates sampled per turn.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Retrieval depth used for the retrieval-consistency score.
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Turns processed concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub response_mode: ResponseMode,
    /// Tags used at inference time, in any order.
    #[serde(default = "default_tags")]
    pub tags: Vec<PreferenceTag>,
    /// Append a generated pseudo response to each inference rewrite.
    #[serde(default)]
    pub expand: bool,
    #[serde(default)]
    pub retriever: IndexConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths();
        config.validate().map_err(|msg| CliError::Config { path: path.to_path_buf(), msg })?;
        Ok(config)
    }

    fn resolve_paths(&mut self) {
        let base = self.base_dir.clone();
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.dialogues);
        join(&mut self.output_dir);
        if let Some(p) = self.demos.as_mut() {
            join(p);
        }
        if let Some(p) = self.qrels.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k < 2 {
            return Err(format!("k must be >= 2, got {}", self.k));
        }
        if self.t < 1 {
            return Err("t must be >= 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be > 0, got {}", self.beta));
        }
        if self.workers < 1 {
            return Err("workers must be >= 1".into());
        }
        if self.tags.is_empty() {
            return Err("tags must not be empty".into());
        }
        if self.tags.iter().collect::<BTreeSet<_>>().len() != self.tags.len() {
            return Err("tags must not repeat".into());
        }
        self.retriever.validate().map_err(|e| e.to_string())?;
        self.llm.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn demos_path(&self) -> CliResult<&Path> {
        self.demos.as_deref().ok_or_else(|| crate::error::usage("config has no `demos` file"))
    }

    /// Requested tags in canonical order.
    pub fn ordered_tags(&self, tags: &[PreferenceTag]) -> Vec<PreferenceTag> {
        PreferenceTag::ALL.into_iter().filter(|t| tags.contains(t)).collect()
    }
}
