//! Run configuration: a TOML manifest with environment-variable and
//! command-line overrides (flags > `ORT_CONFIG` env file > file > defaults),
//! so experiments are reproducible from a single checked-in file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::reasoner::CyclePolicy;

/// Pipeline mode: the complete method or one of its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reverse label reasoning, semantic path filtering, guided mining.
    #[default]
    Full,
    /// Skip the semantic filter: every candidate path is mined.
    NoLlmFilter,
    /// Enumerate paths forward from condition labels instead of reverse
    /// reasoning from aims.
    TraceForward,
    /// No graph at all: the model answers the question directly.
    NoRules,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoLlmFilter => "no_llm_filter",
            Mode::TraceForward => "trace_forward",
            Mode::NoRules => "no_rules",
        }
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "no_llm_filter" => Ok(Mode::NoLlmFilter),
            "trace_forward" => Ok(Mode::TraceForward),
            "no_rules" => Ok(Mode::NoRules),
            other => Err(ConfigError::BadValue {
                field: "mode".to_owned(),
                reason: format!(
                    "{other:?} is not one of full, no_llm_filter, trace_forward, no_rules"
                ),
            }),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which chat backend answers prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Replay recorded fixture files; fully offline and deterministic.
    #[default]
    Mock,
    /// POST to a chat-completion HTTP endpoint.
    Http,
}

impl FromStr for BackendKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(ConfigError::BadValue {
                field: "backend".to_owned(),
                reason: format!("{other:?} is not one of mock, http"),
            }),
        }
    }
}

/// HTTP backend settings. The bearer token is NOT part of the config file:
/// it is read from the ORT_LLM_API_KEY environment variable at startup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Chat-completion endpoint URL; required when the backend is `http`.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            model: "deepseek-v3".to_owned(),
            timeout_secs: 60,
        }
    }
}

/// Everything a run needs, in one manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Maximum reverse-tree depth in labels.
    pub max_pop: usize,
    /// Cap on sampled children (and seed entities) per mining step.
    pub top_k: usize,
    /// Base seed for all sampling.
    pub seed: u64,
    pub mode: Mode,
    pub backend: BackendKind,
    /// Fail on malformed triple lines instead of skipping with a warning.
    pub strict_parse: bool,
    /// How label cycles are avoided during reverse reasoning.
    pub cycle_policy: CyclePolicy,
    /// When no label path survives, fall back to direct model answering
    /// instead of failing the question (off by default so evaluation
    /// numbers stay honest).
    pub fallback_on_empty_paths: bool,
    /// When the semantic filter selects nothing, keep all candidates.
    pub fallback_on_empty_filter: bool,
    /// Record per-stage wall-clock timings in answer records. Off by
    /// default so records stay byte-stable across runs.
    pub record_timing: bool,
    /// Total attempts per model call (transport + parse retries).
    pub max_attempts: u32,
    /// Maximum simultaneous in-flight model calls.
    pub inflight_cap: usize,
    /// Raw triple dump (TSV).
    pub kg_path: Option<PathBuf>,
    /// Prebuilt index cache; preferred over kg_path when both are set.
    pub index_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub prompt_dir: Option<PathBuf>,
    /// Directory of recorded mock responses (required for the mock backend).
    pub fixtures_dir: Option<PathBuf>,
    pub http: HttpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_pop: 5,
            top_k: 10,
            seed: 0,
            mode: Mode::Full,
            backend: BackendKind::Mock,
            strict_parse: false,
            cycle_policy: CyclePolicy::default(),
            fallback_on_empty_paths: false,
            fallback_on_empty_filter: true,
            record_timing: false,
            max_attempts: 2,
            inflight_cap: 4,
            kg_path: None,
            index_path: None,
            dataset_path: None,
            prompt_dir: None,
            fixtures_dir: None,
            http: HttpConfig::default(),
        }
    }
}

/// Optional per-field overrides, applied on top of a loaded config.
/// Command-line flags populate this; any `Some` wins.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub max_pop: Option<usize>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub backend: Option<BackendKind>,
    pub strict_parse: Option<bool>,
    pub kg_path: Option<PathBuf>,
    pub index_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub fixtures_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a TOML manifest.
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Load from a file, or defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                RunConfig::from_toml(&text)
            }
        }
    }

    /// Apply command-line overrides (highest precedence).
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.max_pop {
            self.max_pop = v;
        }
        if let Some(v) = o.top_k {
            self.top_k = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if let Some(v) = o.backend {
            self.backend = v;
        }
        if let Some(v) = o.strict_parse {
            self.strict_parse = v;
        }
        for (slot, value) in [
            (&mut self.kg_path, &o.kg_path),
            (&mut self.index_path, &o.index_path),
            (&mut self.dataset_path, &o.dataset_path),
            (&mut self.prompt_dir, &o.prompt_dir),
            (&mut self.fixtures_dir, &o.fixtures_dir),
        ] {
            if value.is_some() {
                *slot = value.clone();
            }
        }
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::BadValue {
                    field: field.to_owned(),
                    reason: "must be at least 1".to_owned(),
                })
            }
        };
        positive("max_pop", self.max_pop >= 1)?;
        positive("top_k", self.top_k >= 1)?;
        positive("max_attempts", self.max_attempts >= 1)?;
        positive("inflight_cap", self.inflight_cap >= 1)?;
        positive("http.timeout_secs", self.http.timeout_secs >= 1)?;
        Ok(())
    }
}

/// Where the config file comes from: an explicit flag beats the
/// `ORT_CONFIG` environment variable; neither means defaults.
pub fn resolve_config_path(
    cli_flag: Option<PathBuf>,
    env_value: Option<PathBuf>,
) -> Option<PathBuf> {
    cli_flag.or(env_value)
}
