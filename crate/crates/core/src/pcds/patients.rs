use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{choose_archetype, validate_archetypes, Archetype, NoiseModel, Physiology};
use crate::error::{Error, Result};
use crate::physics::{fem_emulator_iop, MIN_PRESSURE_DROP_PA};
use crate::sampling::{constrained_mean, sample_constrained, stream_rng, PriorDraw, SimRng};
use crate::units::{AgeGroup, Facility, FlowRate, Pressure};

/// How the unobserved inflow, uveoscleral outflow and EVP of a synthetic
/// patient are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenState {
    /// The mean of the age group's plausible prior draws.
    PriorMean,
    /// One constrained draw from the age group's priors.
    PriorDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatientSynthesis {
    pub n: usize,
    pub age_min: f64,
    pub age_max: f64,
    pub archetypes: Vec<Archetype>,
    pub hidden: HiddenState,
    pub noise: NoiseModel,
}

impl Default for PatientSynthesis {
    fn default() -> Self {
        Self {
            n: 50,
            age_min: 20.0,
            age_max: 80.0,
            archetypes: super::default_archetypes(),
            hidden: HiddenState::PriorMean,
            noise: NoiseModel::None,
        }
    }
}

/// A patient with known outflow facility whose IOP comes from the
/// reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatient {
    pub id: usize,
    pub age_years: f64,
    pub iop: Pressure,
    pub archetype: String,
    pub c_trab: Facility,
    pub q_ah: FlowRate,
    pub f_u: FlowRate,
    pub evp: Pressure,
}

const ATTEMPTS_PER_PATIENT: usize = 10_000;

/// Draws behind each age group's plausible prior mean.
pub const PRIOR_MEAN_DRAWS: usize = 100_000;

fn hidden_state(
    cfg: &PatientSynthesis,
    phys: &Physiology,
    means: &[PriorDraw],
    group: AgeGroup,
    rng: &mut SimRng,
) -> Result<PriorDraw> {
    match cfg.hidden {
        HiddenState::PriorDraw => Ok(sample_constrained(&phys.priors, group, 1, rng)?[0]),
        HiddenState::PriorMean => Ok(means[group.index()]),
    }
}

/// Plausible prior mean per age group, each from its own stream.
pub fn plausible_prior_means(phys: &Physiology, seed: u64) -> Result<Vec<PriorDraw>> {
    AgeGroup::ALL
        .iter()
        .map(|g| {
            constrained_mean(
                &phys.priors,
                *g,
                PRIOR_MEAN_DRAWS,
                &mut stream_rng(seed, "prior-mean", g.index() as u64),
            )
        })
        .collect()
}

fn one_patient(
    id: usize,
    cfg: &PatientSynthesis,
    phys: &Physiology,
    means: &[PriorDraw],
    rng: &mut SimRng,
) -> Result<SyntheticPatient> {
    for _ in 0..ATTEMPTS_PER_PATIENT {
        let age = cfg.age_min + (cfg.age_max - cfg.age_min) * rng.random::<f64>();
        let group = AgeGroup::of_age(age)?;
        let a = &cfg.archetypes[choose_archetype(&cfg.archetypes, rng)];
        let c = Facility::from_ul_min_mmhg(a.sample_c_trab(rng)?);
        let d = hidden_state(cfg, phys, means, group, rng)?;
        let sd = cfg.noise.draw_sd(rng);
        let iop = fem_emulator_iop(d.q_ah, d.f_u, c, d.evp, &phys.emulator_line, sd, rng)?;
        if iop.value() - d.evp.value() <= MIN_PRESSURE_DROP_PA {
            continue;
        }
        return Ok(SyntheticPatient {
            id,
            age_years: age,
            iop,
            archetype: a.name.clone(),
            c_trab: c,
            q_ah: d.q_ah,
            f_u: d.f_u,
            evp: d.evp,
        });
    }
    Err(Error::SamplingExhausted {
        context: format!("synthetic patient {id}"),
        attempts: ATTEMPTS_PER_PATIENT as u64,
        accepted: 0,
    })
}

/// Patients with known facility for round-trip validation; patient `i`
/// draws from its own derived stream.
pub fn synthesize_patients(
    cfg: &PatientSynthesis,
    phys: &Physiology,
    seed: u64,
) -> Result<Vec<SyntheticPatient>> {
    if cfg.n == 0 {
        return Err(Error::Config("patient synthesis needs n ≥ 1".into()));
    }
    if !(cfg.age_min >= AgeGroup::MIN_AGE && cfg.age_min < cfg.age_max) {
        return Err(Error::Config(
            "patient age range must satisfy 20 ≤ min < max".into(),
        ));
    }
    validate_archetypes(&cfg.archetypes)?;
    cfg.noise.validate()?;
    phys.validate()?;
    let means = match cfg.hidden {
        HiddenState::PriorMean => plausible_prior_means(phys, seed)?,
        HiddenState::PriorDraw => Vec::new(),
    };
    (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            one_patient(
                i,
                cfg,
                phys,
                &means,
                &mut stream_rng(seed, "patients", i as u64),
            )
        })
        .collect()
}
