//! Layered run configuration: defaults, then a TOML file, then command-line
//! flags, then `XPLAN_*` environment variables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use xplan_core::annotate::{CategoryMix, SimpleFractions, SourceWeights, DEFAULT_LEVEL1_TEMPLATE};
use xplan_core::backend::DEFAULT_VERIFIER_PROMPT;
use xplan_core::eval::{config_fingerprint, MetricsConfig};
use xplan_core::mask::DEFAULT_MIN_BOX_AREA;
use xplan_core::orchestrator::{DEFAULT_MAX_RETRIES, DEFAULT_THRESHOLD};
use xplan_core::refine::DEFAULT_DILATION;
use xplan_core::{
    ExecOptions, RefineParams, RegionMode, RoutingProfile, RoutingTable, VerifyPolicy,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {reason}")]
    Value { key: String, reason: String },
}

fn bad(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

/// Endpoint base URLs and transport settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Services {
    pub planner: Option<String>,
    /// Editor for the `default` backend id.
    pub editor: Option<String>,
    /// Editor for removals under bag-of-models; falls back to `editor`.
    pub inpaint: Option<String>,
    /// Editor for style edits under bag-of-models; falls back to `editor`.
    pub global: Option<String>,
    pub segmenter: Option<String>,
    pub verifier: Option<String>,
    pub embedder: Option<String>,
    pub dino: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub verifier_prompt: String,
}

impl Default for Services {
    fn default() -> Self {
        Self {
            planner: None,
            editor: None,
            inpaint: None,
            global: None,
            segmenter: None,
            verifier: None,
            embedder: None,
            dino: None,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 200,
            verifier_prompt: DEFAULT_VERIFIER_PROMPT.to_string(),
        }
    }
}

/// Environment variable suffixes and the field each one sets.
pub const SERVICE_NAMES: [&str; 8] = [
    "PLANNER",
    "EDITOR",
    "INPAINT",
    "GLOBAL",
    "SEGMENTER",
    "VERIFIER",
    "EMBEDDER",
    "DINO",
];

impl Services {
    fn slot(&mut self, name: &str) -> Option<&mut Option<String>> {
        Some(match name {
            "PLANNER" => &mut self.planner,
            "EDITOR" => &mut self.editor,
            "INPAINT" => &mut self.inpaint,
            "GLOBAL" => &mut self.global,
            "SEGMENTER" => &mut self.segmenter,
            "VERIFIER" => &mut self.verifier,
            "EMBEDDER" => &mut self.embedder,
            "DINO" => &mut self.dino,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub enabled: bool,
    pub threshold: u8,
    pub max_retries: u32,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: DEFAULT_THRESHOLD,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    pub dilation_percent: f64,
    pub min_box_area: f64,
    pub region_mode: RegionMode,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self {
            dilation_percent: DEFAULT_DILATION,
            min_box_area: DEFAULT_MIN_BOX_AREA,
            region_mode: RegionMode::Refined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub sources: SourceWeights,
    pub simple_fractions: SimpleFractions,
    pub val_fraction: f64,
    pub category_mix: CategoryMix,
    pub level1_template: String,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            sources: SourceWeights::default(),
            simple_fractions: SimpleFractions::default(),
            val_fraction: 0.05,
            category_mix: CategoryMix::default(),
            level1_template: DEFAULT_LEVEL1_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub routing: RoutingProfile,
    pub services: Services,
    pub verify: VerifySection,
    pub refine: RefineSection,
    pub annotate: AnnotateSection,
    pub metrics: MetricsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            routing: RoutingProfile::BagOfModels,
            services: Services::default(),
            verify: VerifySection::default(),
            refine: RefineSection::default(),
            annotate: AnnotateSection::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Values given on the command line. `None` leaves the lower layer alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub routing: Option<RoutingProfile>,
    pub verify: Option<bool>,
    pub threshold: Option<u8>,
    pub max_retries: Option<u32>,
    pub dilation_percent: Option<f64>,
    pub min_box_area: Option<f64>,
    pub region_mode: Option<RegionMode>,
    pub planner_url: Option<String>,
    pub editor_url: Option<String>,
    pub segmenter_url: Option<String>,
    pub verifier_url: Option<String>,
    pub embedder_url: Option<String>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut self.seed, &o.seed);
        set(&mut self.routing, &o.routing);
        set(&mut self.verify.enabled, &o.verify);
        set(&mut self.verify.threshold, &o.threshold);
        set(&mut self.verify.max_retries, &o.max_retries);
        set(&mut self.refine.dilation_percent, &o.dilation_percent);
        set(&mut self.refine.min_box_area, &o.min_box_area);
        set(&mut self.refine.region_mode, &o.region_mode);
        let s = &mut self.services;
        for (dst, v) in [
            (&mut s.planner, &o.planner_url),
            (&mut s.editor, &o.editor_url),
            (&mut s.segmenter, &o.segmenter_url),
            (&mut s.verifier, &o.verifier_url),
            (&mut s.embedder, &o.embedder_url),
        ] {
            if v.is_some() {
                *dst = v.clone();
            }
        }
    }

    /// Applies `XPLAN_<SERVICE>_URL`, `XPLAN_SEED` and `XPLAN_ROUTING`.
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        for name in SERVICE_NAMES {
            let key = format!("XPLAN_{name}_URL");
            if let Some(url) = lookup(&key).filter(|v| !v.trim().is_empty()) {
                *self.services.slot(name).expect("known service") = Some(url);
            }
        }
        if let Some(v) = lookup("XPLAN_SEED") {
            self.seed = v.trim().parse().map_err(|e| bad("XPLAN_SEED", e))?;
        }
        if let Some(v) = lookup("XPLAN_ROUTING") {
            self.routing = v.parse().map_err(|e| bad("XPLAN_ROUTING", e))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(key, format!("{v} is outside [0, 1]")))
            }
        };
        if self.verify.threshold > 4 {
            return Err(bad(
                "verify.threshold",
                format!("{} is outside 0..=4", self.verify.threshold),
            ));
        }
        unit("refine.dilation_percent", self.refine.dilation_percent)?;
        if !(self.refine.min_box_area > 0.0 && self.refine.min_box_area <= 1.0) {
            return Err(bad(
                "refine.min_box_area",
                format!("{} is outside (0, 1]", self.refine.min_box_area),
            ));
        }
        unit("annotate.val_fraction", self.annotate.val_fraction)?;
        self.annotate
            .simple_fractions
            .validate()
            .map_err(|e| bad("annotate.simple_fractions", e))?;
        for (c, v) in &self.annotate.category_mix.targets {
            unit(&format!("annotate.category_mix.{}", c.name()), *v)?;
        }
        if self.annotate.level1_template.trim().is_empty() {
            return Err(bad("annotate.level1_template", "empty"));
        }
        if self.services.retries > 10 {
            return Err(bad("services.retries", "at most 10"));
        }
        Ok(())
    }

    pub fn policy(&self) -> VerifyPolicy {
        VerifyPolicy {
            enabled: self.verify.enabled,
            threshold: self.verify.threshold,
            max_retries: self.verify.max_retries,
        }
    }

    pub fn routing_table(&self) -> RoutingTable {
        RoutingTable::from_profile(self.routing)
    }

    pub fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            refine: RefineParams {
                dilation_percent: self.refine.dilation_percent,
                min_box_area: self.refine.min_box_area,
            },
            region_mode: self.refine.region_mode,
        }
    }

    /// Hash of everything that can change outputs. `mock` records whether the
    /// in-process mock backends replaced the configured services.
    pub fn fingerprint(&self, mock: bool) -> String {
        config_fingerprint(&(self, mock))
    }
}

/// Builds the effective configuration in precedence order
/// env > flag > file > default.
pub fn load(
    path: Option<&Path>,
    overrides: &Overrides,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<Config, ConfigError> {
    let mut cfg = match path {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    cfg.apply_overrides(overrides);
    cfg.apply_env(lookup)?;
    cfg.validate()?;
    Ok(cfg)
}
