//! Permeability risk thresholds, the rule engine that labels clinical
//! cohorts, and classification scoring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohorts::{CohortDescriptor, DiagnosisTag};
use crate::error::{Error, Result};
use crate::stats::{cohens_kappa, quantile};
use crate::units::Permeability;

/// Mean outflow facility at or below which an OHT cohort is escalated,
/// µL/min/mmHg.
pub const OHT_ESCALATION_OF: f64 = 0.10;
/// Glaucoma fraction from which a mixed cohort counts as compromised.
pub const MIXED_POAG_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLabel {
    Normal,
    Borderline,
    Compromised,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 3] = [
        RiskLabel::Normal,
        RiskLabel::Borderline,
        RiskLabel::Compromised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// One-letter code: N, B or C.
    pub fn code(self) -> &'static str {
        match self {
            RiskLabel::Normal => "N",
            RiskLabel::Borderline => "B",
            RiskLabel::Compromised => "C",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLabel::Normal => "Normal",
            RiskLabel::Borderline => "Borderline",
            RiskLabel::Compromised => "Compromised",
        })
    }
}

impl FromStr for RiskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" | "normal" => Ok(RiskLabel::Normal),
            "b" | "borderline" => Ok(RiskLabel::Borderline),
            "c" | "compromised" => Ok(RiskLabel::Compromised),
            _ => Err(Error::domain(format!("unknown risk label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    /// 25th percentile of the Normal population.
    pub normal_floor: Permeability,
    /// 75th percentile of the Compromised population.
    pub compromised_ceiling: Permeability,
    /// Set when the populations overlap so the Borderline band is empty.
    pub degenerate_band: bool,
}

impl RiskThresholds {
    pub fn new(normal_floor: Permeability, compromised_ceiling: Permeability) -> Result<Self> {
        let t = Self {
            normal_floor,
            compromised_ceiling,
            degenerate_band: compromised_ceiling.0 >= normal_floor.0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("normal_floor", self.normal_floor.0),
            ("compromised_ceiling", self.compromised_ceiling.0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn warning(&self) -> Option<String> {
        self.degenerate_band.then(|| {
            format!(
                "compromised ceiling {:.4e} m² is not below normal floor {:.4e} m²; the Borderline band is empty",
                self.compromised_ceiling.0, self.normal_floor.0
            )
        })
    }
}

/// Normal floor at the 25th percentile of `normal_ktm`, compromised ceiling
/// at the 75th percentile of `compromised_ktm` (type-7 quantiles, m²).
pub fn derive_thresholds(normal_ktm: &[f64], compromised_ktm: &[f64]) -> Result<RiskThresholds> {
    if normal_ktm.is_empty() || compromised_ktm.is_empty() {
        return Err(Error::InsufficientData(
            "threshold populations must be nonempty".into(),
        ));
    }
    RiskThresholds::new(
        Permeability(quantile(normal_ktm, 0.25)?),
        Permeability(quantile(compromised_ktm, 0.75)?),
    )
}

/// Closed boundaries: the floor itself is Normal and the ceiling itself is
/// Compromised. With a degenerate band Normal wins.
pub fn classify(k_tm: Permeability, t: &RiskThresholds) -> RiskLabel {
    if k_tm.0 >= t.normal_floor.0 {
        RiskLabel::Normal
    } else if k_tm.0 <= t.compromised_ceiling.0 {
        RiskLabel::Compromised
    } else {
        RiskLabel::Borderline
    }
}

/// Rule-based ground truth from a cohort's description. Mixed cohorts are
/// decided by their glaucoma fraction, then healthy, glaucoma and OHT tags
/// apply in that order; anything else is Borderline.
pub fn assign_ground_truth(c: &CohortDescriptor) -> Result<RiskLabel> {
    let tags = &c.diagnosis_tags;
    if tags.is_empty() {
        return Err(Error::domain(format!(
            "cohort {} has no diagnosis tag",
            c.id
        )));
    }
    if tags.contains(&DiagnosisTag::Mixed) {
        return Ok(match c.poag_fraction {
            Some(f) if f >= MIXED_POAG_FRACTION => RiskLabel::Compromised,
            Some(_) => RiskLabel::Borderline,
            None => RiskLabel::Borderline,
        });
    }
    if tags.contains(&DiagnosisTag::Healthy) {
        return Ok(RiskLabel::Normal);
    }
    if [
        DiagnosisTag::POAG,
        DiagnosisTag::OAG,
        DiagnosisTag::Glaucoma,
    ]
    .iter()
    .any(|t| tags.contains(t))
    {
        return Ok(RiskLabel::Compromised);
    }
    if tags.contains(&DiagnosisTag::OHT) {
        return Ok(match c.mean_of {
            Some(of) if of <= OHT_ESCALATION_OF => RiskLabel::Compromised,
            _ => RiskLabel::Borderline,
        });
    }
    if tags.contains(&DiagnosisTag::Ambiguous) {
        return Ok(RiskLabel::Borderline);
    }
    Err(Error::domain(format!("no rule applies to cohort {}", c.id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScore {
    pub accuracy: f64,
    pub kappa: f64,
    /// Rows are true labels, columns predictions, in Normal, Borderline,
    /// Compromised order.
    pub confusion: [[usize; 3]; 3],
    pub n: usize,
}

pub fn score_classification(
    truth: &[RiskLabel],
    pred: &[RiskLabel],
) -> Result<ClassificationScore> {
    if truth.len() != pred.len() {
        return Err(Error::domain(format!(
            "label lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InsufficientData("no labels to score".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (t, p) in truth.iter().zip(pred) {
        confusion[t.index()][p.index()] += 1;
    }
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    Ok(ClassificationScore {
        accuracy: correct as f64 / truth.len() as f64,
        kappa: cohens_kappa(truth, pred)?,
        confusion,
        n: truth.len(),
    })
}
