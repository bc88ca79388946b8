//! The single JSON document that drives a pipeline run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{sha256_hex, Provenance};
use crate::error::{Error, Result};
use crate::gbt::{GbtHyperparams, SearchSpace};
use crate::inference::{InferenceConfig, PatientInput};
use crate::pcds::{
    Archetype, CalibrationConfig, HiddenState, PatientSynthesis, Physiology, Stage1Config,
    Stage2Config,
};
use crate::physics::PorosityTable;
use crate::units::Pressure;

pub const DEFAULT_SEED: u64 = 123;

/// Fixed hyperparameters, or a random search whose winner is refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModelSettings {
    Fixed {
        hyperparams: GbtHyperparams,
    },
    Search {
        space: SearchSpace,
        k_folds: usize,
        n_iter: usize,
    },
}

impl ModelSettings {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSettings::Fixed { hyperparams } => hyperparams.validate(),
            ModelSettings::Search {
                space,
                k_folds,
                n_iter,
            } => {
                if *k_folds < 2 || *n_iter == 0 {
                    return Err(Error::Config(
                        "search needs k_folds ≥ 2 and n_iter ≥ 1".into(),
                    ));
                }
                space.validate()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtSettings {
    pub stage1: ModelSettings,
    pub stage2: ModelSettings,
}

impl Default for GbtSettings {
    fn default() -> Self {
        Self {
            stage1: ModelSettings::Fixed {
                hyperparams: GbtHyperparams::stage1(),
            },
            stage2: ModelSettings::Fixed {
                hyperparams: GbtHyperparams::stage2(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub patients: PatientSynthesis,
    pub bootstrap_resamples: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            patients: PatientSynthesis::default(),
            bootstrap_resamples: 1000,
        }
    }
}

/// Archetype populations for deriving and checking risk thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub normal: Archetype,
    pub borderline: Archetype,
    pub compromised: Archetype,
    /// Patients per archetype used to place the thresholds.
    pub n_derive: usize,
    /// Fresh evaluation cohorts per archetype, classified by median K_TM.
    pub eval_cohorts: usize,
    pub eval_cohort_size: usize,
    pub hidden: HiddenState,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            normal: Archetype::normal(),
            borderline: Archetype::borderline(),
            compromised: Archetype::compromised(),
            n_derive: 200,
            eval_cohorts: 5,
            eval_cohort_size: 60,
            hidden: HiddenState::PriorMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    /// Synthetic patients scanned when none is given explicitly.
    pub n_patients: usize,
    /// Patient used by the CLI when no age and IOP are given.
    pub default_patient: PatientInput,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            n_patients: 3,
            default_patient: PatientInput {
                age_years: 65.0,
                iop: Pressure::from_mmhg(21.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub physiology: Physiology,
    pub porosity: PorosityTable,
    pub stage1: Stage1Config,
    pub calibration: CalibrationConfig,
    pub stage2: Stage2Config,
    pub gbt: GbtSettings,
    pub n_draws: usize,
    pub validation: ValidationConfig,
    pub thresholds: ThresholdConfig,
    pub sensitivity: SensitivityConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            physiology: Physiology::default(),
            porosity: PorosityTable::default(),
            stage1: Stage1Config::default(),
            calibration: CalibrationConfig::default(),
            stage2: Stage2Config::default(),
            gbt: GbtSettings::default(),
            n_draws: 1000,
            validation: ValidationConfig::default(),
            thresholds: ThresholdConfig::default(),
            sensitivity: SensitivityConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.physiology.validate()?;
        self.porosity.validate()?;
        self.stage1.validate()?;
        self.calibration.noise.validate()?;
        if self.calibration.n < 3 {
            return Err(Error::Config("calibration.n must be ≥ 3".into()));
        }
        self.stage2.validate()?;
        self.gbt.stage1.validate()?;
        self.gbt.stage2.validate()?;
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be ≥ 1".into()));
        }
        if self.validation.patients.n < 3 || self.validation.bootstrap_resamples == 0 {
            return Err(Error::Config(
                "validation needs ≥ 3 patients and ≥ 1 bootstrap resample".into(),
            ));
        }
        let t = &self.thresholds;
        if t.n_derive == 0 || t.eval_cohorts == 0 || t.eval_cohort_size == 0 {
            return Err(Error::Config(
                "threshold population sizes must be ≥ 1".into(),
            ));
        }
        crate::pcds::validate_archetypes(&[
            t.normal.clone(),
            t.borderline.clone(),
            t.compromised.clone(),
        ])?;
        self.sensitivity.default_patient.validate()?;
        Ok(())
    }

    /// sha256 of the compact JSON serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance::new(self.hash()?, self.seed))
    }

    pub fn inference(&self) -> Result<InferenceConfig> {
        Ok(InferenceConfig {
            n_draws: self.n_draws,
            mu: self.physiology.mu,
            porosity: self.porosity,
            config_hash: self.hash()?,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
