//! Monte-Carlo posterior profiling of a patient through the two stage
//! models, plus reference normalization, the prior sensitivity protocol and
//! a radar rendering.

mod reference;
mod sensitivity;
mod svg;

pub use reference::{normalize_profile, NormalizedProfile, ReferencePopulation};
pub use sensitivity::{sensitivity_scan, Scenario, SensitivityEntry, SensitivityReport};
pub use svg::render_radar_svg;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{stage1_features, stage1_schema, stage2_features, stage2_schema};
use crate::gbt::TreeEnsemble;
use crate::physics::{pore_diameter, PorosityTable, MIN_PRESSURE_DROP_PA};
use crate::sampling::{sample_constrained, stream_rng, PriorDraw, PriorSet, REJECTION_BUDGET};
use crate::stats::Summary;
use crate::units::{AgeGroup, Pressure, Viscosity};

pub const PROFILE_FORMAT: &str = "outflow-profile";
pub const PROFILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientInput {
    pub age_years: f64,
    /// Measured IOP.
    pub iop: Pressure,
}

impl PatientInput {
    pub fn new(age_years: f64, iop: Pressure) -> Result<Self> {
        let p = Self { age_years, iop };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        AgeGroup::of_age(self.age_years)?;
        if !(self.iop.value().is_finite() && self.iop.value() > 0.0) {
            return Err(Error::domain(format!(
                "IOP {} Pa must be positive",
                self.iop.value()
            )));
        }
        Ok(())
    }
}

/// Posterior quantities, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    KTm,
    G,
    CTrab,
    DP,
    QAh,
    FU,
    Evp,
}

impl Parameter {
    pub const ALL: [Parameter; 7] = [
        Parameter::KTm,
        Parameter::G,
        Parameter::CTrab,
        Parameter::DP,
        Parameter::QAh,
        Parameter::FU,
        Parameter::Evp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Parameter::KTm => "K_TM",
            Parameter::G => "G",
            Parameter::CTrab => "C_trab",
            Parameter::DP => "D_p",
            Parameter::QAh => "Q_AH",
            Parameter::FU => "F_u",
            Parameter::Evp => "EVP",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageModels {
    pub stage1: TreeEnsemble,
    pub stage2: TreeEnsemble,
}

impl TwoStageModels {
    pub fn new(stage1: TreeEnsemble, stage2: TreeEnsemble) -> Result<Self> {
        stage1_schema().check_same(&stage1.schema)?;
        stage2_schema().check_same(&stage2.schema)?;
        Ok(Self { stage1, stage2 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub n_draws: usize,
    pub mu: Viscosity,
    pub porosity: PorosityTable,
    /// Hash of the configuration that produced the models, for provenance.
    pub config_hash: String,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            n_draws: 1000,
            mu: Viscosity::default(),
            porosity: PorosityTable::default(),
            config_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub k_tm: Vec<f64>,
    pub g: Vec<f64>,
    pub c_trab: Vec<f64>,
    pub d_p: Vec<f64>,
    pub q_ah: Vec<f64>,
    pub f_u: Vec<f64>,
    pub evp: Vec<f64>,
}

impl Draws {
    pub fn get(&self, p: Parameter) -> &[f64] {
        match p {
            Parameter::KTm => &self.k_tm,
            Parameter::G => &self.g,
            Parameter::CTrab => &self.c_trab,
            Parameter::DP => &self.d_p,
            Parameter::QAh => &self.q_ah,
            Parameter::FU => &self.f_u,
            Parameter::Evp => &self.evp,
        }
    }

    pub fn len(&self) -> usize {
        self.k_tm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_tm.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileProvenance {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub mu: f64,
    pub porosity: f64,
    pub kozeny_k: f64,
    pub n_draws: usize,
    pub age_group: AgeGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorProfile {
    pub format: String,
    pub version: u32,
    pub patient: PatientInput,
    pub draws: Draws,
    pub summary: BTreeMap<Parameter, Summary>,
    pub provenance: ProfileProvenance,
}

impl PosteriorProfile {
    pub fn median(&self, p: Parameter) -> f64 {
        self.summary[&p].median
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: PosteriorProfile = serde_json::from_str(s)?;
        if p.format != PROFILE_FORMAT || p.version != PROFILE_VERSION {
            return Err(Error::Artifact(format!(
                "expected {PROFILE_FORMAT} v{PROFILE_VERSION}, found {} v{}",
                p.format, p.version
            )));
        }
        Ok(p)
    }
}

/// Plausible prior draws for which the patient's IOP exceeds EVP by the
/// inversion guard.
fn patient_draws(
    p: &PatientInput,
    priors: &PriorSet,
    group: AgeGroup,
    n: usize,
    seed: u64,
) -> Result<Vec<PriorDraw>> {
    let mut rng = stream_rng(seed, "profile-draws", 0);
    let mut out = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while out.len() < n {
        let batch = sample_constrained(priors, group, n - out.len(), &mut rng)?;
        attempts += batch.len() as u64;
        out.extend(
            batch
                .into_iter()
                .filter(|d| p.iop.value() - d.evp.value() > MIN_PRESSURE_DROP_PA),
        );
        if attempts >= REJECTION_BUDGET && out.len() < n {
            return Err(Error::SamplingExhausted {
                context: format!("prior draws below IOP {:.1} Pa", p.iop.value()),
                attempts,
                accepted: out.len() as u64,
            });
        }
    }
    Ok(out)
}

/// Pushes `cfg.n_draws` plausible prior states through both models for one
/// patient and summarizes the resulting draws.
pub fn profile_patient(
    p: &PatientInput,
    models: &TwoStageModels,
    priors: &PriorSet,
    cfg: &InferenceConfig,
    seed: u64,
) -> Result<PosteriorProfile> {
    p.validate()?;
    if cfg.n_draws == 0 {
        return Err(Error::Config("n_draws must be ≥ 1".into()));
    }
    cfg.porosity.validate()?;
    let group = AgeGroup::of_age(p.age_years)?;
    let eps = cfg.porosity.porosity(group);
    let mu = cfg.mu.0;
    let prior = patient_draws(p, priors, group, cfg.n_draws, seed)?;
    let iop = p.iop.value();

    let per_draw: Vec<[f64; 7]> = prior
        .par_iter()
        .map(|d| {
            let (q, f, e) = (d.q_ah.value(), d.f_u.value(), d.evp.value());
            let log_k = models
                .stage1
                .predict(&stage1_features(iop, q, f, e, group))?;
            let log_g =
                models
                    .stage2
                    .predict(&stage2_features(log_k, iop, q, f, e, p.age_years))?;
            let k = 10f64.powf(log_k);
            let g = 10f64.powf(log_g);
            let c = k * g / mu;
            let d_p = pore_diameter(crate::units::Permeability(k), eps, cfg.porosity.kozeny_k)?;
            Ok([k, g, c, d_p, q, f, e])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| per_draw.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let draws = Draws {
        k_tm: col(0),
        g: col(1),
        c_trab: col(2),
        d_p: col(3),
        q_ah: col(4),
        f_u: col(5),
        evp: col(6),
    };
    let mut summary = BTreeMap::new();
    for param in Parameter::ALL {
        summary.insert(param, Summary::of(draws.get(param))?);
    }
    Ok(PosteriorProfile {
        format: PROFILE_FORMAT.into(),
        version: PROFILE_VERSION,
        patient: *p,
        draws,
        summary,
        provenance: ProfileProvenance {
            tool_version: crate::VERSION.into(),
            seed,
            config_hash: cfg.config_hash.clone(),
            mu,
            porosity: eps,
            kozeny_k: cfg.porosity.kozeny_k,
            n_draws: cfg.n_draws,
            age_group: group,
        },
    })
}
