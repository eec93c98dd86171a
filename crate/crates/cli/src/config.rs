//! Pipeline configuration file.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [paths]
//! publications = "data/publications.jsonl"
//! ground_truth = "data/advisors.csv"
//! out_dir = "out"
//!
//! [model]
//! pool_dim = 200
//! node_layers = [128, 64, 32]
//!
//! [corrections]
//! temporal_rescale = true
//! disciplinary_correction = false
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use lineage_core::disambiguation::DisambiguationConfig;
use lineage_core::eval::{SplitSpec, SyntheticSpec};
use lineage_core::features::FeatureConfig;
use lineage_core::genealogy::{EligibilityRule, ExportFormat};
use lineage_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub publications: PathBuf,
    pub ground_truth: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            publications: "publications.jsonl".into(),
            ground_truth: "advisors.csv".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corrections {
    pub temporal_rescale: bool,
    pub disciplinary_correction: bool,
    pub org_buckets: usize,
}

impl Default for Corrections {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Corrections {
            temporal_rescale: f.temporal_rescale,
            disciplinary_correction: f.disciplinary_correction,
            org_buckets: f.org_buckets,
        }
    }
}

impl Corrections {
    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            temporal_rescale: self.temporal_rescale,
            disciplinary_correction: self.disciplinary_correction,
            org_buckets: self.org_buckets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenealogyOptions {
    pub threshold: f64,
    pub top_k: usize,
    pub format: ExportFormat,
}

impl Default for GenealogyOptions {
    fn default() -> Self {
        GenealogyOptions {
            threshold: 0.5,
            top_k: 1,
            format: ExportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Seeds every random draw of a run: negative sampling, splits,
    /// initialization, dropout and the generator.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub eligibility: EligibilityRule,
    pub corrections: Corrections,
    pub disambiguation: DisambiguationConfig,
    pub genealogy: GenealogyOptions,
    pub synth: SyntheticSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: None,
            paths: Paths::default(),
            model: ModelConfig::default(),
            split: SplitSpec::default(),
            eligibility: EligibilityRule::default(),
            corrections: Corrections::default(),
            disambiguation: DisambiguationConfig::default(),
            genealogy: GenealogyOptions::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.publications,
            &mut cfg.paths.ground_truth,
            &mut cfg.paths.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError("a seed is required: set `seed` in the config or pass --seed".into()))
    }

    /// Model settings with the shared seed and count corrections applied.
    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let cfg = ModelConfig {
            seed: self.seed()?,
            features: self.corrections.features(),
            ..self.model.clone()
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn split_spec(&self) -> Result<SplitSpec, ConfigError> {
        Ok(SplitSpec {
            seed: self.seed()?,
            ..self.split.clone()
        })
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.paths.out_dir.join(file)
    }
}
