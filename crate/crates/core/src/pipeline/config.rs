use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::instruction::EndpointConfig;
use crate::losses::StyleConfig;
use crate::perception::{BackendDescriptor, BackendKind};
use crate::segmentation::ShapeSpec;
use crate::stylenet::CompositeMode;

/// Referring-segmentation service settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterConfig {
    pub endpoint: String,
    #[serde(default = "default_segmenter_timeout")]
    pub timeout_secs: u64,
}

fn default_segmenter_timeout() -> u64 {
    120
}

/// Everything a run needs besides the per-image manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub style: StyleConfig,
    pub backend: BackendDescriptor,
    pub llm: Option<EndpointConfig>,
    pub segmenter: Option<SegmenterConfig>,
    /// Mask used when neither a mask file nor a segmenter is available.
    pub synthetic_mask: Option<ShapeSpec>,
    pub composite: CompositeMode,
    pub jobs: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            style: StyleConfig::default(),
            backend: BackendDescriptor::default(),
            llm: None,
            segmenter: None,
            synthetic_mask: None,
            composite: CompositeMode::Off,
            jobs: 1,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOverrides {
    pub threshold: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub weights: Option<PathBuf>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub composite: Option<CompositeMode>,
    pub jobs: Option<usize>,
}

/// Parses a TOML config document. Unknown keys are rejected by name.
pub fn parse_config(text: &str) -> Result<AppConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_owned()))
}

/// Resolves the effective configuration: CLI flags over file over defaults.
pub fn load_config(path: Option<&Path>, overrides: &CliOverrides) -> Result<AppConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text)?
        }
        None => AppConfig::default(),
    };
    let o = overrides;
    if let Some(t) = o.threshold {
        cfg.style.threshold = t;
    }
    if let Some(n) = o.iterations {
        cfg.style.iterations = n;
    }
    if let Some(s) = o.seed {
        cfg.style.seed = s;
    }
    if let Some(kind) = o.backend {
        cfg.backend.kind = kind;
    }
    if let Some(w) = &o.weights {
        cfg.backend.weights_path = Some(w.clone());
    }
    if o.llm_endpoint.is_some() || o.llm_model.is_some() {
        let llm = cfg.llm.get_or_insert_with(EndpointConfig::default);
        if let Some(url) = &o.llm_endpoint {
            llm.base_url = url.clone();
        }
        if let Some(model) = &o.llm_model {
            llm.model = model.clone();
        }
    }
    if let Some(mode) = o.composite {
        cfg.composite = mode;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    if let Some(llm) = cfg.llm.take() {
        cfg.llm = Some(llm.with_env_token());
    }
    cfg.style.validate()?;
    cfg.backend.validate()?;
    if cfg.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    Ok(cfg)
}

/// Applies a JSON object of `StyleConfig` field overrides.
pub fn apply_style_overrides(base: &StyleConfig, overrides: &Map<String, Value>) -> Result<StyleConfig> {
    let mut value = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    let fields = value.as_object_mut().expect("StyleConfig serializes to an object");
    for (key, v) in overrides {
        if !fields.contains_key(key) {
            return Err(Error::Config(format!("unknown style override `{key}`")));
        }
        fields.insert(key.clone(), v.clone());
    }
    let cfg: StyleConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid style override: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
