//! Pipeline configuration: TOML/JSON file, environment, and flag overrides
//! resolved with precedence env < file < flags, then fingerprinted.
//!
//! The fingerprint — a stable hash of the fully resolved config — is stamped
//! into every checkpoint so a run can refuse to mix artifacts produced under
//! different settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::WindowConfig;
use crate::llmio::{BackendConfig, BackendKind};
use crate::plotgraph::TraversalMode;
use crate::refine::RefineConfig;

/// Configuration error naming the offending key.
#[derive(Debug, Error)]
#[error("config error at `{key}`: {detail}")]
pub struct ConfigError {
    pub key: String,
    pub detail: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, detail: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            detail: detail.into(),
        }
    }
}

/// Fully resolved pipeline settings.
///
/// Defaults follow the validated operating point: four refinement rounds,
/// BFT traversal, temperature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Novel path; may also come from the CLI positional argument.
    pub novel: Option<PathBuf>,
    pub backend: BackendConfig,
    pub window: WindowConfig,
    pub refine: RefineConfig,
    pub traversal: TraversalMode,
    /// Target scene count for outline planning; `None` lets the model pick.
    pub scenes: Option<usize>,
    pub seed: u64,
    /// Maximum relation-extraction passes before forcing stabilization.
    pub max_relation_passes: usize,
    /// Directory of prompt-template overrides.
    pub template_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            novel: None,
            backend: BackendConfig::default(),
            window: WindowConfig::default(),
            refine: RefineConfig::default(),
            traversal: TraversalMode::Bft,
            scenes: None,
            seed: 0,
            max_relation_passes: 5,
            template_dir: None,
        }
    }
}

/// Untyped overrides from CLI flags; parsed and validated here so every
/// bad value surfaces as a [`ConfigError`] naming its key.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub novel: Option<PathBuf>,
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub window_lookahead: Option<usize>,
    pub budget_tokens: Option<usize>,
    pub traversal: Option<String>,
    pub max_rounds: Option<usize>,
    pub scenes: Option<usize>,
    pub seed: Option<u64>,
    pub template_dir: Option<PathBuf>,
}

fn parse_backend_kind(raw: &str) -> Result<BackendKind, ConfigError> {
    match raw.to_ascii_lowercase().as_str() {
        "openai" => Ok(BackendKind::Openai),
        "mock" => Ok(BackendKind::Mock),
        other => Err(ConfigError::new(
            "backend",
            format!("unknown backend `{other}` (expected openai or mock)"),
        )),
    }
}

fn parse_traversal(raw: &str) -> Result<TraversalMode, ConfigError> {
    raw.parse()
        .map_err(|detail: String| ConfigError::new("traversal", detail))
}

/// Resolve the configuration: defaults, then environment variables, then the
/// config file, then flag overrides.
///
/// Environment: `PLOTLOOM_BACKEND`, `PLOTLOOM_BASE_URL`, `PLOTLOOM_MODEL`,
/// `PLOTLOOM_TRAVERSAL`, `PLOTLOOM_SEED` (the API key env var is named by
/// the config itself and read only at call time).
pub fn load_config(
    file: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();

    apply_env(&mut cfg)?;
    if let Some(path) = file {
        cfg = read_config_file(path, cfg)?;
    }
    apply_overrides(&mut cfg, overrides)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn apply_env(cfg: &mut PipelineConfig) -> Result<(), ConfigError> {
    if let Ok(backend) = std::env::var("PLOTLOOM_BACKEND") {
        cfg.backend.kind = parse_backend_kind(&backend)?;
    }
    if let Ok(base_url) = std::env::var("PLOTLOOM_BASE_URL") {
        cfg.backend.base_url = base_url;
    }
    if let Ok(model) = std::env::var("PLOTLOOM_MODEL") {
        cfg.backend.model = model;
    }
    if let Ok(traversal) = std::env::var("PLOTLOOM_TRAVERSAL") {
        cfg.traversal = parse_traversal(&traversal)?;
    }
    if let Ok(seed) = std::env::var("PLOTLOOM_SEED") {
        cfg.seed = seed
            .parse()
            .map_err(|_| ConfigError::new("seed", format!("not an integer: `{seed}`")))?;
    }
    Ok(())
}

/// Parse a TOML or JSON config file over the current values. The file may be
/// partial; unset keys keep their defaults. Unknown keys are rejected.
fn read_config_file(path: &Path, base: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|ext| ext == "json")
        || raw.trim_start().starts_with('{');
    // Merge file values over the base by round-tripping through JSON.
    let mut merged = serde_json::to_value(&base)
        .map_err(|e| ConfigError::new("config", e.to_string()))?;
    let file_value: serde_json::Value = if is_json {
        serde_json::from_str(&raw)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?
    } else {
        let parsed: toml::Value = raw
            .parse()
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        serde_json::to_value(parsed).map_err(|e| ConfigError::new("config", e.to_string()))?
    };
    merge_json(&mut merged, file_value);
    serde_json::from_value(merged).map_err(|e| {
        // serde names the failing field in its message; surface it as the key.
        ConfigError::new(extract_field(&e.to_string()), e.to_string())
    })
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(overlay_map)) => {
            for (key, value) in overlay_map {
                match base_map.get_mut(&key) {
                    Some(slot) if slot.is_object() && value.is_object() => {
                        merge_json(slot, value);
                    }
                    _ => {
                        base_map.insert(key, value);
                    }
                }
            }
        }
        (base_slot, overlay) => *base_slot = overlay,
    }
}

fn extract_field(message: &str) -> String {
    // serde messages look like "unknown field `x`..." / "invalid type ... `x`".
    message
        .split('`')
        .nth(1)
        .unwrap_or("config")
        .to_string()
}

fn apply_overrides(
    cfg: &mut PipelineConfig,
    overrides: &ConfigOverrides,
) -> Result<(), ConfigError> {
    if let Some(novel) = &overrides.novel {
        cfg.novel = Some(novel.clone());
    }
    if let Some(backend) = &overrides.backend {
        cfg.backend.kind = parse_backend_kind(backend)?;
    }
    if let Some(base_url) = &overrides.base_url {
        cfg.backend.base_url = base_url.clone();
    }
    if let Some(model) = &overrides.model {
        cfg.backend.model = model.clone();
    }
    if let Some(script) = &overrides.script {
        cfg.backend.script_path = Some(script.clone());
    }
    if let Some(lookahead) = overrides.window_lookahead {
        cfg.window.lookahead_chapters = lookahead;
    }
    if let Some(budget) = overrides.budget_tokens {
        cfg.window.context_token_budget = budget;
    }
    if let Some(traversal) = &overrides.traversal {
        cfg.traversal = parse_traversal(traversal)?;
    }
    if let Some(max_rounds) = overrides.max_rounds {
        cfg.refine.max_rounds = max_rounds;
    }
    if let Some(scenes) = overrides.scenes {
        cfg.scenes = Some(scenes);
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &overrides.template_dir {
        cfg.template_dir = Some(dir.clone());
    }
    Ok(())
}

fn validate(cfg: &PipelineConfig) -> Result<(), ConfigError> {
    cfg.window
        .validate()
        .map_err(|detail| ConfigError::new("budget_tokens", detail))?;
    cfg.refine
        .validate()
        .map_err(|detail| ConfigError::new("max_rounds", detail))?;
    cfg.backend
        .validate()
        .map_err(|detail| ConfigError::new("backend", detail))?;
    if cfg.max_relation_passes < 1 {
        return Err(ConfigError::new(
            "max_relation_passes",
            "must be at least 1",
        ));
    }
    Ok(())
}

/// Stable hash of the resolved config: sha256 over its canonical JSON,
/// truncated to 16 hex chars.
///
/// The novel path is excluded — its content is captured by the chapters
/// checkpoint, and only the `ingest` invocation carries the path, so hashing
/// it would make stage-by-stage runs disagree with `run`.
pub fn fingerprint(cfg: &PipelineConfig) -> String {
    let mut hashed = cfg.clone();
    hashed.novel = None;
    let canonical = serde_json::to_string(&hashed).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}
