//! Physics-calibrated data scaling: the emulator-generated permeability
//! dataset, the bias-line calibration and the large calibrated population
//! used to learn the geometry factor.

mod io;
mod patients;

pub use io::{
    read_stage1_csv, read_stage2_csv, read_stage2_latent_csv, write_stage1_csv, write_stage2_csv,
    write_stage2_latent_csv, STAGE1_COLUMNS, STAGE2_COLUMNS, STAGE2_LATENT_COLUMNS,
};
pub(crate) use io::{write_table, Table};
pub use patients::{
    plausible_prior_means, synthesize_patients, HiddenState, PatientSynthesis, SyntheticPatient,
    PRIOR_MEAN_DRAWS,
};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{stage1_features, stage1_schema};
use crate::gbt::{Dataset, TreeEnsemble};
use crate::physics::{
    facility_from_permeability, fem_emulator_iop, goldmann_iop, BiasLine, GeometryTable,
    MIN_PRESSURE_DROP_PA,
};
use crate::sampling::{
    lhs_sample, sample_constrained, stream_rng, LhsDesign, LhsDim, NormalParams, PriorSet, Scale,
    SimRng,
};
use crate::stats::{deming_fit, ols_fit};
use crate::units::{
    AgeGroup, Facility, FlowRate, GeometryFactor, Permeability, Pressure, Viscosity,
};

/// Rows generated per parallel work unit; each chunk has its own stream.
const CHUNK: usize = 512;

/// Gaussian IOP measurement noise, in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Fixed {
        sd_mmhg: f64,
    },
    /// Per-row sd drawn uniformly from `[0, max_sd_mmhg]`.
    UniformSd {
        max_sd_mmhg: f64,
    },
}

impl NoiseModel {
    pub fn draw_sd<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Fixed { sd_mmhg } => sd_mmhg,
            NoiseModel::UniformSd { max_sd_mmhg } => max_sd_mmhg * rng.random::<f64>(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Fixed { sd_mmhg } => sd_mmhg,
            NoiseModel::UniformSd { max_sd_mmhg } => max_sd_mmhg,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("noise sd {v} must be ≥ 0")))
        }
    }
}

/// The synthetic world: priors, geometry, viscosity and the line relating
/// the reference model to Goldmann.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct Physiology {
    pub priors: PriorSet,
    pub geometry: GeometryTable,
    pub mu: Viscosity,
    pub emulator_line: BiasLine,
}


impl Physiology {
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        self.geometry.validate()?;
        self.emulator_line.validate()?;
        if !(self.mu.0 > 0.0 && self.mu.0.is_finite()) {
            return Err(Error::Config("viscosity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub n: usize,
    /// Log-uniform permeability range, m².
    pub ktm_lower: f64,
    pub ktm_upper: f64,
    pub noise: NoiseModel,
    pub max_attempts_per_row: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            n: 9000,
            ktm_lower: 1e-17,
            ktm_upper: 1e-13,
            noise: NoiseModel::UniformSd { max_sd_mmhg: 3.5 },
            max_attempts_per_row: 10_000,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("stage 1 n must be ≥ 1".into()));
        }
        if !(self.ktm_lower > 0.0 && self.ktm_lower < self.ktm_upper && self.ktm_upper.is_finite())
        {
            return Err(Error::Config(
                "permeability range must satisfy 0 < lower < upper".into(),
            ));
        }
        if self.max_attempts_per_row == 0 {
            return Err(Error::Config("max_attempts_per_row must be ≥ 1".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Row {
    pub iop: Pressure,
    pub q_ah: FlowRate,
    pub f_u: FlowRate,
    pub evp: Pressure,
    pub age_group: AgeGroup,
    pub target_log10_ktm: f64,
}

impl Stage1Row {
    pub fn features(&self) -> [f64; 7] {
        stage1_features(
            self.iop.value(),
            self.q_ah.value(),
            self.f_u.value(),
            self.evp.value(),
            self.age_group,
        )
    }
}

/// One emulator evaluation that passed the pressure-drop guards.
struct EmulatedRun {
    row: Stage1Row,
    iop_goldmann: Pressure,
}

fn emulate_run(
    k0: f64,
    group: AgeGroup,
    cfg: &Stage1Config,
    noise: &NoiseModel,
    guard_emulator: bool,
    phys: &Physiology,
    rng: &mut SimRng,
) -> Result<EmulatedRun> {
    let (lo, hi) = (cfg.ktm_lower.log10(), cfg.ktm_upper.log10());
    let g = phys.geometry.factor(group);
    let mut k = k0;
    for attempt in 0..cfg.max_attempts_per_row {
        if attempt > 0 {
            // discarded rows are redrawn from the full design range
            k = 10f64.powf(lo + (hi - lo) * rng.random::<f64>());
        }
        let d = sample_constrained(&phys.priors, group, 1, rng)?[0];
        let c = facility_from_permeability(Permeability(k), g, phys.mu)?;
        let iop_g = goldmann_iop(d.q_ah, d.f_u, c, d.evp)?;
        let sd = noise.draw_sd(rng);
        let iop = fem_emulator_iop(d.q_ah, d.f_u, c, d.evp, &phys.emulator_line, sd, rng)?;
        let evp = d.evp.value();
        let emu_ok = !guard_emulator || iop.value() - evp > MIN_PRESSURE_DROP_PA;
        if emu_ok && iop_g.value() - evp > MIN_PRESSURE_DROP_PA {
            return Ok(EmulatedRun {
                row: Stage1Row {
                    iop,
                    q_ah: d.q_ah,
                    f_u: d.f_u,
                    evp: d.evp,
                    age_group: group,
                    target_log10_ktm: k.log10(),
                },
                iop_goldmann: iop_g,
            });
        }
    }
    Err(Error::SamplingExhausted {
        context: format!("emulator row ({} group)", group.name()),
        attempts: cfg.max_attempts_per_row,
        accepted: 0,
    })
}

/// Latin hypercube over log K with age groups assigned round robin, so the
/// permeability design is independent of age. Each chunk of rows draws from
/// its own derived stream. Without `guard_emulator` only the Goldmann
/// pressure drop is checked, so the noise is never truncated.
fn emulate_design(
    n: usize,
    stream: &str,
    cfg: &Stage1Config,
    noise: &NoiseModel,
    guard_emulator: bool,
    phys: &Physiology,
    seed: u64,
) -> Result<Vec<EmulatedRun>> {
    let design = LhsDesign {
        n,
        dims: vec![LhsDim {
            name: "k_tm".into(),
            lower: cfg.ktm_lower,
            upper: cfg.ktm_upper,
            scale: Scale::Log10,
        }],
    };
    let ks: Vec<f64> = lhs_sample(&design, &mut stream_rng(seed, &format!("{stream}-lhs"), 0))?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let chunks: Vec<Vec<EmulatedRun>> = ks
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, part)| {
            let mut rng = stream_rng(seed, &format!("{stream}-rows"), c as u64);
            part.iter()
                .enumerate()
                .map(|(j, &k)| {
                    let group = AgeGroup::ALL[(c * CHUNK + j) % 3];
                    emulate_run(k, group, cfg, noise, guard_emulator, phys, &mut rng)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Emulator-generated permeability dataset.
pub fn generate_stage1(cfg: &Stage1Config, phys: &Physiology, seed: u64) -> Result<Vec<Stage1Row>> {
    cfg.validate()?;
    phys.validate()?;
    Ok(
        emulate_design(cfg.n, "stage1", cfg, &cfg.noise, true, phys, seed)?
            .into_iter()
            .map(|r| r.row)
            .collect(),
    )
}

pub fn stage1_dataset(rows: &[Stage1Row]) -> Result<(Dataset, Vec<f64>)> {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features().to_vec()).collect();
    let y = rows.iter().map(|r| r.target_log10_ktm).collect();
    Ok((Dataset::from_rows(stage1_schema(), &x)?, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub n: usize,
    pub noise: NoiseModel,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n: 500,
            noise: NoiseModel::Fixed { sd_mmhg: 3.5 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub ols: BiasLine,
    pub deming: BiasLine,
    pub n: usize,
    pub p_value_slope: f64,
    pub r2_adj: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
}

impl CalibrationFit {
    /// `|OLS − Deming|` within `k` OLS standard errors for both coefficients.
    pub fn lines_agree(&self, k: f64) -> bool {
        (self.ols.intercept - self.deming.intercept).abs() <= k * self.se_intercept
            && (self.ols.slope - self.deming.slope).abs() <= k * self.se_slope
    }
}

/// Draws `cal.n` reference-model runs from the permeability design, and
/// regresses `IOP_ref − IOP_G` on `IOP_G` (mmHg) by OLS and by Deming
/// regression with unit variance ratio.
pub fn fit_bias(
    cal: &CalibrationConfig,
    design: &Stage1Config,
    phys: &Physiology,
    seed: u64,
) -> Result<CalibrationFit> {
    if cal.n < 3 {
        return Err(Error::Config("calibration needs n ≥ 3".into()));
    }
    cal.noise.validate()?;
    design.validate()?;
    phys.validate()?;
    let runs = emulate_design(cal.n, "calibration", design, &cal.noise, false, phys, seed)?;
    let x: Vec<f64> = runs.iter().map(|r| r.iop_goldmann.mmhg()).collect();
    let y: Vec<f64> = runs
        .iter()
        .map(|r| r.row.iop.mmhg() - r.iop_goldmann.mmhg())
        .collect();
    let ols = ols_fit(&x, &y)?;
    let dem = deming_fit(&x, &y, 1.0)?;
    Ok(CalibrationFit {
        ols: BiasLine::new(ols.intercept, ols.slope)?,
        deming: BiasLine::new(dem.intercept, dem.slope)?,
        n: cal.n,
        p_value_slope: ols.p_slope,
        r2_adj: ols.r2_adj,
        se_intercept: ols.se_intercept,
        se_slope: ols.se_slope,
    })
}

/// A clinical facility distribution, µL/min/mmHg, truncated to positive values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    pub c_trab: NormalParams,
}

impl Archetype {
    pub fn new(name: &str, weight: f64, mean: f64, sd: f64) -> Self {
        Self {
            name: name.into(),
            weight,
            c_trab: NormalParams::new(mean, sd),
        }
    }

    pub fn normal() -> Self {
        Self::new("Normal", 0.5, 0.28, 0.07)
    }

    pub fn compromised() -> Self {
        Self::new("Compromised", 0.5, 0.12, 0.05)
    }

    /// Centered between the Normal 25th and Compromised 75th percentiles.
    pub fn borderline() -> Self {
        Self::new("Borderline", 1.0, 0.19, 0.04)
    }

    /// Positive facility draw in µL/min/mmHg, by rejection.
    pub fn sample_c_trab<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        for _ in 0..crate::sampling::REJECTION_BUDGET {
            let c = self.c_trab.sample(rng);
            if c > 0.0 {
                return Ok(c);
            }
        }
        Err(Error::SamplingExhausted {
            context: format!("{} archetype facility", self.name),
            attempts: crate::sampling::REJECTION_BUDGET,
            accepted: 0,
        })
    }
}

pub fn default_archetypes() -> Vec<Archetype> {
    vec![Archetype::normal(), Archetype::compromised()]
}

pub fn validate_archetypes(archetypes: &[Archetype]) -> Result<()> {
    if archetypes.is_empty() {
        return Err(Error::Config("at least one archetype is required".into()));
    }
    for a in archetypes {
        if !(a.weight > 0.0 && a.weight.is_finite()) {
            return Err(Error::Config(format!(
                "archetype `{}` weight must be positive",
                a.name
            )));
        }
        a.c_trab.validate(&a.name)?;
        if a.c_trab.mean <= 0.0 && a.c_trab.sd == 0.0 {
            return Err(Error::Config(format!(
                "archetype `{}` has no positive mass",
                a.name
            )));
        }
    }
    Ok(())
}

pub(crate) fn choose_archetype<R: Rng + ?Sized>(archetypes: &[Archetype], rng: &mut R) -> usize {
    let total: f64 = archetypes.iter().map(|a| a.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, a) in archetypes.iter().enumerate() {
        if u < a.weight {
            return i;
        }
        u -= a.weight;
    }
    archetypes.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub n: usize,
    pub age_min: f64,
    pub age_max: f64,
    pub archetypes: Vec<Archetype>,
    pub noise: NoiseModel,
    pub max_attempts_per_row: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            n: 120_000,
            age_min: 20.0,
            age_max: 80.0,
            archetypes: default_archetypes(),
            noise: NoiseModel::UniformSd { max_sd_mmhg: 3.5 },
            max_attempts_per_row: 10_000,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("stage 2 n must be ≥ 1".into()));
        }
        if !(self.age_min >= AgeGroup::MIN_AGE
            && self.age_min < self.age_max
            && self.age_max.is_finite())
        {
            return Err(Error::Config(format!(
                "age range must satisfy {} ≤ min < max",
                AgeGroup::MIN_AGE
            )));
        }
        if self.max_attempts_per_row == 0 {
            return Err(Error::Config("max_attempts_per_row must be ≥ 1".into()));
        }
        validate_archetypes(&self.archetypes)?;
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Row {
    pub predicted_log10_ktm: f64,
    pub iop_calibrated: Pressure,
    pub q_ah: FlowRate,
    pub f_u: FlowRate,
    pub evp: Pressure,
    pub age_years: f64,
    pub target_log10_g: f64,
}

impl Stage2Row {
    pub fn features(&self) -> [f64; 6] {
        crate::features::stage2_features(
            self.predicted_log10_ktm,
            self.iop_calibrated.value(),
            self.q_ah.value(),
            self.f_u.value(),
            self.evp.value(),
            self.age_years,
        )
    }
}

/// Generating quantities of a Stage 2 row that are not model features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Latent {
    pub c_trab: Facility,
    /// Measured (noisy) Goldmann IOP before calibration.
    pub iop_goldmann: Pressure,
    pub k_tm: Permeability,
    pub g: GeometryFactor,
    pub archetype: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stage2Dataset {
    pub rows: Vec<Stage2Row>,
    pub latent: Vec<Stage2Latent>,
}

impl Stage2Dataset {
    pub fn to_dataset(&self) -> Result<(Dataset, Vec<f64>)> {
        let x: Vec<Vec<f64>> = self.rows.iter().map(|r| r.features().to_vec()).collect();
        let y = self.rows.iter().map(|r| r.target_log10_g).collect();
        Ok((Dataset::from_rows(crate::features::stage2_schema(), &x)?, y))
    }
}

fn stage2_row(
    cfg: &Stage2Config,
    model: &TreeEnsemble,
    line: &BiasLine,
    phys: &Physiology,
    rng: &mut SimRng,
) -> Result<(Stage2Row, Stage2Latent)> {
    for _ in 0..cfg.max_attempts_per_row {
        let age = cfg.age_min + (cfg.age_max - cfg.age_min) * rng.random::<f64>();
        let group = AgeGroup::of_age(age)?;
        let a = &cfg.archetypes[choose_archetype(&cfg.archetypes, rng)];
        let c = Facility::from_ul_min_mmhg(a.sample_c_trab(rng)?);
        let d = sample_constrained(&phys.priors, group, 1, rng)?[0];
        let iop_true = goldmann_iop(d.q_ah, d.f_u, c, d.evp)?;
        let sd = cfg.noise.draw_sd(rng);
        let iop_g = if sd > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            Pressure::from_mmhg(iop_true.mmhg() + sd * z)
        } else {
            iop_true
        };
        let iop_cal = line.calibrate(iop_g);
        let evp = d.evp.value();
        if iop_g.value() - evp <= MIN_PRESSURE_DROP_PA
            || iop_cal.value() - evp <= MIN_PRESSURE_DROP_PA
        {
            continue;
        }
        let x = stage1_features(iop_cal.value(), d.q_ah.value(), d.f_u.value(), evp, group);
        let pred = model.predict(&x)?;
        let k = Permeability::from_log10(pred);
        let g = GeometryFactor(c.value() * phys.mu.0 / k.0);
        let row = Stage2Row {
            predicted_log10_ktm: pred,
            iop_calibrated: iop_cal,
            q_ah: d.q_ah,
            f_u: d.f_u,
            evp: d.evp,
            age_years: age,
            target_log10_g: g.0.log10(),
        };
        let latent = Stage2Latent {
            c_trab: c,
            iop_goldmann: iop_g,
            k_tm: k,
            g,
            archetype: a.name.clone(),
        };
        return Ok((row, latent));
    }
    Err(Error::SamplingExhausted {
        context: "stage 2 row".into(),
        attempts: cfg.max_attempts_per_row,
        accepted: 0,
    })
}

/// Calibrated synthetic population. Each row pairs a clinical facility drawn
/// from the archetype mix with the frozen Stage 1 permeability estimate on
/// its calibrated features; the target geometry factor closes Darcy's
/// relation between the two.
pub fn generate_stage2(
    cfg: &Stage2Config,
    stage1: &TreeEnsemble,
    fit: &CalibrationFit,
    phys: &Physiology,
    seed: u64,
) -> Result<Stage2Dataset> {
    cfg.validate()?;
    phys.validate()?;
    stage1_schema().check_same(&stage1.schema)?;
    let n_chunks = cfg.n.div_ceil(CHUNK);
    let chunks: Vec<Vec<(Stage2Row, Stage2Latent)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, "stage2-rows", c as u64);
            let len = CHUNK.min(cfg.n - c * CHUNK);
            (0..len)
                .map(|_| stage2_row(cfg, stage1, &fit.ols, phys, &mut rng))
                .collect()
        })
        .collect::<Result<_>>()?;
    let (rows, latent) = chunks.into_iter().flatten().unzip();
    Ok(Stage2Dataset { rows, latent })
}
