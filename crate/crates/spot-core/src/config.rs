//! Versioned TOML run configuration.
//!
//! One file names every backend (n-gram model files or remote endpoints),
//! picks the default, and records experiment defaults the CLI flags can
//! override. Precedence is flags > file > built-in defaults.
//!
//! ```toml
//! version = 1
//! default_backend = "demo"
//! output_dir = "out"
//! context_len = 24
//! completion_len = 40
//! # profile = "out/profile.json"
//!
//! [backends.demo]
//! kind = "ngram"
//! model_path = "models/demo.spotngm"
//! vocab_path = "models/demo.vocab.json"
//!
//! [backends.big]
//! kind = "remote"
//! endpoint = "http://127.0.0.1:8080"
//! model_name = "big"
//! timeout_ms = 10000
//! max_batch = 4
//! ```
//!
//! Relative paths are resolved against the config file's directory, so a
//! config can travel with its model files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ngram::NgramModel;
use crate::backend::remote::{RemoteBackendConfig, RemoteModel};
use crate::backend::{BackendError, ScoringModel, TokenCodec};

/// Errors from loading or using a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config not found: {0}")]
    NotFound(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config references missing path: {0}")]
    MissingPath(String),
    #[error("backend not registered: {0}")]
    UnknownBackend(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One registered backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDecl {
    /// A persisted n-gram model (binary container + vocabulary sidecar).
    Ngram {
        model_path: PathBuf,
        vocab_path: PathBuf,
    },
    /// A remote inference server speaking the `/v1` wire protocol.
    Remote {
        #[serde(flatten)]
        config: RemoteBackendConfig,
    },
}

fn default_context_len() -> usize {
    24
}

fn default_completion_len() -> usize {
    40
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The parsed, validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Config format version; this release reads version 1.
    pub version: u32,
    /// Key into `backends` used when no `--backend` flag is given.
    pub default_backend: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_context_len")]
    pub context_len: usize,
    #[serde(default = "default_completion_len")]
    pub completion_len: usize,
    /// Default threshold profile for `detect`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    /// Log filter applied when `RUST_LOG` is unset (e.g. `info`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    pub backends: BTreeMap<String, BackendDecl>,
}

impl RunConfig {
    /// Read, resolve, and validate a config file.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|_| ConfigError::NotFound(path.display().to_string()))?;
        let mut config: RunConfig =
            toml::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.output_dir);
        if let Some(profile) = &mut self.profile {
            resolve(profile);
        }
        for decl in self.backends.values_mut() {
            if let BackendDecl::Ngram {
                model_path,
                vocab_path,
            } = decl
            {
                resolve(model_path);
                resolve(vocab_path);
            }
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.version != 1 {
            return Err(ConfigError::Invalid(format!(
                "unsupported config version {} (this build reads version 1)",
                self.version
            )));
        }
        if self.backends.is_empty() {
            return Err(ConfigError::Invalid(
                "no backends registered".to_string(),
            ));
        }
        if !self.backends.contains_key(&self.default_backend) {
            return Err(ConfigError::Invalid(format!(
                "default_backend {:?} is not a registered backend",
                self.default_backend
            )));
        }
        for (name, decl) in &self.backends {
            if let BackendDecl::Ngram {
                model_path,
                vocab_path,
            } = decl
            {
                for path in [model_path, vocab_path] {
                    if !path.exists() {
                        return Err(ConfigError::MissingPath(format!(
                            "backend {name:?}: {}",
                            path.display()
                        )));
                    }
                }
            }
        }
        if let Some(profile) = &self.profile {
            if !profile.exists() {
                return Err(ConfigError::MissingPath(format!(
                    "profile: {}",
                    profile.display()
                )));
            }
        }
        Ok(())
    }

    /// Instantiate a backend by registry name (remote backends are
    /// connected, which verifies the server answers).
    pub fn open_backend(&self, name: &str) -> Result<BackendHandle, ConfigError> {
        let decl = self
            .backends
            .get(name)
            .ok_or_else(|| ConfigError::UnknownBackend(name.to_string()))?;
        match decl {
            BackendDecl::Ngram {
                model_path,
                vocab_path,
            } => Ok(BackendHandle::Ngram(NgramModel::load(
                model_path, vocab_path,
            )?)),
            BackendDecl::Remote { config } => {
                Ok(BackendHandle::Remote(RemoteModel::connect(config.clone())?))
            }
        }
    }

    /// All registered n-gram backend names, in registry order.
    pub fn ngram_backend_names(&self) -> Vec<String> {
        self.backends
            .iter()
            .filter(|(_, d)| matches!(d, BackendDecl::Ngram { .. }))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// An opened backend, either flavor.
pub enum BackendHandle {
    Ngram(NgramModel),
    Remote(RemoteModel),
}

impl BackendHandle {
    /// The text codec, for backends that tokenize locally. Remote backends
    /// tokenize server-side, so text input must arrive pre-tokenized.
    pub fn codec(&self) -> Option<&dyn TokenCodec> {
        match self {
            BackendHandle::Ngram(model) => Some(model),
            BackendHandle::Remote(_) => None,
        }
    }

    /// The n-gram model, when this handle is one.
    pub fn as_ngram(&self) -> Option<&NgramModel> {
        match self {
            BackendHandle::Ngram(model) => Some(model),
            BackendHandle::Remote(_) => None,
        }
    }
}

impl ScoringModel for BackendHandle {
    fn model_id(&self) -> &str {
        match self {
            BackendHandle::Ngram(m) => m.model_id(),
            BackendHandle::Remote(m) => m.model_id(),
        }
    }

    fn vocab_size(&self) -> u32 {
        match self {
            BackendHandle::Ngram(m) => m.vocab_size(),
            BackendHandle::Remote(m) => m.vocab_size(),
        }
    }

    fn window(&self) -> usize {
        match self {
            BackendHandle::Ngram(m) => m.window(),
            BackendHandle::Remote(m) => m.window(),
        }
    }

    fn rank_batch(&self, tokens: &[u32], first_scored: usize) -> Result<Vec<u32>, BackendError> {
        match self {
            BackendHandle::Ngram(m) => m.rank_batch(tokens, first_scored),
            BackendHandle::Remote(m) => m.rank_batch(tokens, first_scored),
        }
    }

    fn next_argmax(&self, prefix: &[u32]) -> Result<u32, BackendError> {
        match self {
            BackendHandle::Ngram(m) => m.next_argmax(prefix),
            BackendHandle::Remote(m) => m.next_argmax(prefix),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ngram::{train_ngram, NgramParams};

    fn write_model(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
        let model = train_ngram(&["alpha beta gamma alpha beta"], &NgramParams::default(), name)
            .unwrap();
        let model_path = dir.join(format!("{name}.spotngm"));
        let vocab_path = dir.join(format!("{name}.vocab.json"));
        model.save(&model_path, &vocab_path).unwrap();
        (model_path, vocab_path)
    }

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("spot.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn loads_and_opens_a_relative_ngram_backend() {
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), "demo");
        let path = write_config(
            dir.path(),
            "version = 1\n\
             default_backend = \"demo\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"demo.spotngm\"\n\
             vocab_path = \"demo.vocab.json\"\n",
        );
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.context_len, 24);
        assert_eq!(config.completion_len, 40);
        let handle = config.open_backend("demo").unwrap();
        assert_eq!(handle.model_id(), "demo");
        assert!(handle.codec().is_some());
    }

    #[test]
    fn missing_model_files_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            "version = 1\n\
             default_backend = \"demo\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"absent.spotngm\"\n\
             vocab_path = \"absent.vocab.json\"\n",
        );
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().starts_with("config references missing path"));
    }

    #[test]
    fn unknown_default_backend_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), "demo");
        let path = write_config(
            dir.path(),
            "version = 1\n\
             default_backend = \"elsewhere\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"demo.spotngm\"\n\
             vocab_path = \"demo.vocab.json\"\n",
        );
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("default_backend"));
    }

    #[test]
    fn future_config_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), "demo");
        let path = write_config(
            dir.path(),
            "version = 2\n\
             default_backend = \"demo\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"demo.spotngm\"\n\
             vocab_path = \"demo.vocab.json\"\n",
        );
        let err = RunConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported config version 2"));
    }

    #[test]
    fn remote_backends_parse_without_contacting_the_server() {
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), "demo");
        let path = write_config(
            dir.path(),
            "version = 1\n\
             default_backend = \"demo\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"demo.spotngm\"\n\
             vocab_path = \"demo.vocab.json\"\n\
             [backends.big]\n\
             kind = \"remote\"\n\
             endpoint = \"http://127.0.0.1:9\"\n\
             model_name = \"big\"\n\
             timeout_ms = 500\n\
             max_batch = 2\n",
        );
        let config = RunConfig::load(&path).unwrap();
        match &config.backends["big"] {
            BackendDecl::Remote { config } => {
                assert_eq!(config.model_name, "big");
                assert_eq!(config.max_batch, 2);
            }
            other => panic!("expected remote decl, got {other:?}"),
        }
        assert_eq!(config.ngram_backend_names(), ["demo"]);
    }

    #[test]
    fn unregistered_backend_names_error() {
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), "demo");
        let path = write_config(
            dir.path(),
            "version = 1\n\
             default_backend = \"demo\"\n\
             [backends.demo]\n\
             kind = \"ngram\"\n\
             model_path = \"demo.spotngm\"\n\
             vocab_path = \"demo.vocab.json\"\n",
        );
        let config = RunConfig::load(&path).unwrap();
        let err = match config.open_backend("nope") {
            Err(e) => e,
            Ok(_) => panic!("unregistered backend must not open"),
        };
        assert_eq!(err.to_string(), "backend not registered: nope");
    }
}
