//! Experiment configuration, read from TOML. Every field has a default, so
//! an empty file runs the full comparison on the default synthetic data.

use std::path::{Path, PathBuf};

use bioprofile::eval::screening::default_percents;
use bioprofile::interpret::PdMethod;
use bioprofile::{default_study_config, FeatureStage, GeneratorConfig, PassengerTrait, StudyConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub study: StudyConfig,
    pub screening: ScreeningConfig,
    pub interpret: InterpretConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("bioprofile-out"),
            data: DataConfig::default(),
            study: StudyConfig::default(),
            screening: ScreeningConfig::default(),
            interpret: InterpretConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Passenger CSV, used when `source = "file"`.
    pub path: Option<PathBuf>,
    pub delimiter: char,
    /// Levels with fewer records are pooled into `not_otherwise_specified`.
    pub collapse_threshold: usize,
    pub generator: GeneratorConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            path: None,
            delimiter: ',',
            collapse_threshold: 50,
            generator: default_study_config(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    /// Screening rates in whole percent.
    pub percents: Vec<u32>,
    pub manual_baseline: f64,
    pub envelope_replicates: usize,
    pub envelope_level: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            percents: default_percents(),
            manual_baseline: bioprofile::eval::MANUAL_BASELINE,
            envelope_replicates: 1000,
            envelope_level: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretConfig {
    /// Tune and fit the boosting model on the full data at the end of `study`.
    pub fit_full_model: bool,
    pub stage: FeatureStage,
    pub traits: Vec<PassengerTrait>,
    /// Pair of traits for the interaction panel.
    pub interaction: Option<(PassengerTrait, PassengerTrait)>,
    pub method: PdMethod,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig {
            fit_full_model: true,
            stage: FeatureStage::Stage12,
            traits: vec![PassengerTrait::Age, PassengerTrait::Occupation, PassengerTrait::VisitReason],
            interaction: Some((PassengerTrait::Occupation, PassengerTrait::CitizenshipGroup)),
            method: PdMethod::Data,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.data.source == DataSource::File && self.data.path.is_none() {
            return bad("data.path is required when data.source = \"file\"");
        }
        if !self.data.delimiter.is_ascii() {
            return bad("data.delimiter must be an ASCII character");
        }
        if self.study.models.is_empty() || self.study.stages.is_empty() {
            return bad("study.models and study.stages must not be empty");
        }
        if self.study.folds < 2 || self.study.repeats == 0 {
            return bad("study needs at least 2 folds and 1 repeat");
        }
        if self.screening.percents.is_empty() || self.screening.percents.iter().any(|&p| p == 0 || p > 100) {
            return bad("screening.percents must lie in 1..=100");
        }
        if self.screening.envelope_replicates < 2 || !(0.0..1.0).contains(&self.screening.envelope_level) {
            return bad("screening envelope needs 2+ replicates and a level in (0, 1)");
        }
        if let Some((a, b)) = self.interpret.interaction {
            if a == b {
                return bad("interpret.interaction needs two different traits");
            }
        }
        self.data.generator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
