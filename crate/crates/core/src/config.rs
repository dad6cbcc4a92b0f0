//! TOML run configuration shared by every command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, MarketEnv};
use crate::ledger::LedgerConfig;
use crate::policy_gradient::{default_schedule, scale_schedule, validate_schedule, CurriculumStage, TrainerConfig};
use crate::profiles::{load_profile, synthesize_default, DayProfile};

pub const SYNTHETIC_SOURCE: &str = "synthetic";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// `synthetic` or a path to a 24-row profile CSV.
    pub source: String,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { source: SYNTHETIC_SOURCE.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    pub stages: Vec<CurriculumStage>,
    /// Multiplies every stage budget.
    pub scale: f64,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        Self { stages: default_schedule(), scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub episodes: usize,
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { episodes: 1, deterministic: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub profile: ProfileSection,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub curriculum: CurriculumSection,
    pub ledger: LedgerConfig,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            workers: 1,
            profile: ProfileSection::default(),
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            curriculum: CurriculumSection::default(),
            ledger: LedgerConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates. Relative profile paths stay relative to the
    /// working directory.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.trainer.validate().map_err(|e| invalid(&e))?;
        validate_schedule(&self.curriculum.stages).map_err(|e| invalid(&e))?;
        if !(self.curriculum.scale > 0.0 && self.curriculum.scale.is_finite()) {
            return Err(ConfigError::Invalid(format!("curriculum scale must be > 0, got {}", self.curriculum.scale)));
        }
        self.ledger.validate().map_err(|e| invalid(&e))?;
        if self.evaluation.episodes == 0 {
            return Err(ConfigError::Invalid("evaluation episodes must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        if self.profile.source == SYNTHETIC_SOURCE {
            MarketEnv::new(synthesize_default(), self.env.clone()).map_err(|e| invalid(&e))?;
        }
        Ok(())
    }

    pub fn load_profile(&self) -> Result<DayProfile, ConfigError> {
        if self.profile.source == SYNTHETIC_SOURCE {
            Ok(synthesize_default())
        } else {
            load_profile(&self.profile.source).map_err(|e| ConfigError::Invalid(e.to_string()))
        }
    }

    pub fn build_env(&self) -> Result<MarketEnv, ConfigError> {
        MarketEnv::new(self.load_profile()?, self.env.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Stages with the scale factor applied.
    pub fn scaled_stages(&self) -> Vec<CurriculumStage> {
        scale_schedule(&self.curriculum.stages, self.curriculum.scale)
    }
}
