//! Pipeline configuration file.
//!
//! A TOML file with one table per stage. Every key is optional; command-line
//! flags override the file. Relative paths are resolved against the
//! directory of the file.
//!
//! ```toml
//! log_level = "info"
//!
//! [paths]
//! samples = "data/samples.jsonl"
//! traces = "work/traces.jsonl"
//! refined = "work/refined.jsonl"
//! dataset_dir = "work/dataset"
//!
//! [generation]
//! n_frames = 4
//! mock_error_rate = 0.33
//! [generation.endpoint]
//! base_url = "http://127.0.0.1:8000/v1"
//! api_key_env_var = "REASFORGE_API_KEY"
//!
//! [refine]
//! include_unclassifiable = true
//!
//! [build]
//! mode = "mtl-all"
//! cr_fraction = 1.0
//!
//! [train]
//! epochs = 20
//! learning_rate = 0.1
//! ```
//!
//! API keys are never read from the file; the endpoint names the
//! environment variable that holds the key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BuildConfig;
use crate::generation::{GeneratorEndpoint, DEFAULT_FRAMES, DEFAULT_TOTAL_FRAMES};
use crate::record::ValidationError;
use crate::toytrain::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub samples: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub refined: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub endpoint: GeneratorEndpoint,
    pub n_frames: usize,
    pub total_frames: usize,
    /// Prompt template file; the built-in template when absent.
    pub template: Option<PathBuf>,
    pub mock_error_rate: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            endpoint: GeneratorEndpoint::default(),
            n_frames: DEFAULT_FRAMES,
            total_frames: DEFAULT_TOTAL_FRAMES,
            template: None,
            mock_error_rate: 0.33,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Conclusion pattern file, one pattern per line.
    pub patterns: Option<PathBuf>,
    /// Answer extraction rule table (TOML).
    pub rules: Option<PathBuf>,
    pub include_unclassifiable: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { patterns: None, rules: None, include_unclassifiable: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub log_level: Option<String>,
    pub paths: Paths,
    pub generation: GenerationConfig,
    pub refine: RefineConfig,
    pub build: BuildConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Schema(String),
    #[error("config key `{0}` looks like a credential; put the key in the environment variable named by generation.endpoint.api_key_env_var")]
    Credential(String),
    #[error("config: {0}")]
    Invalid(#[from] ValidationError),
}

const SECRET_WORDS: [&str; 6] = ["key", "apikey", "token", "secret", "password", "bearer"];

fn find_secret(table: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let lower = k.to_lowercase();
        let secret = lower.split(['_', '-']).any(|part| SECRET_WORDS.contains(&part));
        if secret && k != "api_key_env_var" {
            return Some(path);
        }
        if let toml::Value::Table(t) = v {
            if let Some(found) = find_secret(t, &path) {
                return Some(found);
            }
        }
    }
    None
}

impl PipelineConfig {
    /// Parses config text. Error messages never quote values, so a
    /// misplaced secret is not echoed back.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let at = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
            ConfigError::Syntax(format!("{}{at}", e.message()))
        })?;
        if let Some(key) = find_secret(&table, "") {
            return Err(ConfigError::Credential(key));
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Schema(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a file and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut config = Self::from_toml_str(&text)?;
        config.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.paths.samples);
        fix(&mut self.paths.traces);
        fix(&mut self.paths.refined);
        fix(&mut self.paths.dataset_dir);
        fix(&mut self.generation.template);
        fix(&mut self.refine.patterns);
        fix(&mut self.refine.rules);
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let g = &self.generation;
        if !(0.0..=1.0).contains(&g.mock_error_rate) {
            return Err(ValidationError::new(
                "generation.mock_error_rate",
                format!("{} not in [0, 1]", g.mock_error_rate),
            ));
        }
        if g.n_frames == 0 || g.total_frames == 0 {
            return Err(ValidationError::new("generation.n_frames", "frame counts must be at least 1"));
        }
        if let Some(level) = &self.log_level {
            if level.parse::<log::LevelFilter>().is_err() {
                return Err(ValidationError::new("log_level", format!("unknown level {level:?}")));
            }
        }
        self.build.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Mode;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = PipelineConfig::from_toml_str(
            "log_level = \"debug\"\n[paths]\nsamples = \"s.jsonl\"\n[build]\nmode = \"stl-cr\"\ncr_fraction = 0.5\n\
             [train]\nepochs = 3\n[train.weights]\nalpha = 0.7\nbeta = 0.3\n[generation.endpoint]\nmax_concurrent = 2\n",
        )
        .unwrap();
        assert_eq!(c.build.mode, Mode::StlCr);
        assert_eq!(c.build.cr_fraction, 0.5);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.weights.beta, 0.3);
        assert_eq!(c.train.batch, TrainConfig::default().batch);
        assert_eq!(c.generation.endpoint.max_concurrent, 2);
        assert_eq!(c.paths.samples.as_deref(), Some(Path::new("s.jsonl")));
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(matches!(PipelineConfig::from_toml_str("[train]\nepochz = 3\n"), Err(ConfigError::Schema(_))));
        assert!(matches!(PipelineConfig::from_toml_str("[build]\ncr_fraction = 0.0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::from_toml_str("log_level = \"loud\"\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::from_toml_str("[paths\n"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn secrets_are_rejected_without_echo() {
        let err = PipelineConfig::from_toml_str("[generation.endpoint]\napi_key = \"sk-live-123\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Credential(ref k) if k == "generation.endpoint.api_key"));
        assert!(!msg.contains("sk-live-123"), "{msg}");
        let err = PipelineConfig::from_toml_str("token = \"sk-live-123\"\n").unwrap_err();
        assert!(!err.to_string().contains("sk-live-123"));
        let ok = "[generation.endpoint]\napi_key_env_var = \"MY_KEY\"\nmax_tokens = 512\n";
        assert_eq!(PipelineConfig::from_toml_str(ok).unwrap().generation.endpoint.max_tokens, Some(512));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, "[paths]\nsamples = \"in/s.jsonl\"\ntraces = \"/abs/t.jsonl\"\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.samples.unwrap(), dir.path().join("in/s.jsonl"));
        assert_eq!(c.paths.traces.unwrap(), PathBuf::from("/abs/t.jsonl"));
    }
}
