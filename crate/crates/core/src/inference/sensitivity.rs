use serde::{Deserialize, Serialize};

use super::{profile_patient, InferenceConfig, Parameter, PatientInput, TwoStageModels};
use crate::error::Result;
use crate::sampling::PriorSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    /// All prior sds × 1.5.
    Wide,
    /// All prior sds × 0.5.
    Narrow,
    /// Inflow means × 1.3.
    HighInflow,
    /// Inflow means × 0.7.
    LowInflow,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Baseline,
        Scenario::Wide,
        Scenario::Narrow,
        Scenario::HighInflow,
        Scenario::LowInflow,
    ];

    pub fn apply(self, priors: &PriorSet) -> PriorSet {
        match self {
            Scenario::Baseline => *priors,
            Scenario::Wide => priors.with_sd_scale(1.5),
            Scenario::Narrow => priors.with_sd_scale(0.5),
            Scenario::HighInflow => priors.with_inflow_mean_scale(1.3),
            Scenario::LowInflow => priors.with_inflow_mean_scale(0.7),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Baseline => "Baseline",
            Scenario::Wide => "Wide",
            Scenario::Narrow => "Narrow",
            Scenario::HighInflow => "High Inflow",
            Scenario::LowInflow => "Low Inflow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub scenario: Scenario,
    pub parameter: Parameter,
    pub median: f64,
    pub cv: f64,
    /// Percent change relative to the baseline scenario.
    pub median_change_pct: f64,
    pub cv_change_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub patient: PatientInput,
    pub seed: u64,
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityReport {
    pub fn entry(&self, scenario: Scenario, parameter: Parameter) -> Option<&SensitivityEntry> {
        self.entries
            .iter()
            .find(|e| e.scenario == scenario && e.parameter == parameter)
    }
}

fn pct(x: f64, base: f64) -> f64 {
    100.0 * (x - base) / base
}

/// Profiles the patient under each [`Scenario`] with the same seed and
/// reports percent changes of posterior median and CV against baseline.
pub fn sensitivity_scan(
    p: &PatientInput,
    models: &TwoStageModels,
    priors: &PriorSet,
    cfg: &InferenceConfig,
    seed: u64,
) -> Result<SensitivityReport> {
    let profiles = Scenario::ALL
        .iter()
        .map(|s| profile_patient(p, models, &s.apply(priors), cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let base = &profiles[0];
    let mut entries = Vec::new();
    for (s, prof) in Scenario::ALL.iter().zip(&profiles) {
        for param in Parameter::ALL {
            let (b, x) = (&base.summary[&param], &prof.summary[&param]);
            entries.push(SensitivityEntry {
                scenario: *s,
                parameter: param,
                median: x.median,
                cv: x.cv,
                median_change_pct: pct(x.median, b.median),
                cv_change_pct: pct(x.cv, b.cv),
            });
        }
    }
    Ok(SensitivityReport {
        patient: *p,
        seed,
        entries,
    })
}
