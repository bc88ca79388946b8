//! Age-stratified physiological priors, constrained rejection sampling,
//! Latin hypercube designs and deterministic seed splitting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{AgeGroup, FlowRate, Pressure};

/// Generator used for every simulation stream.
pub type SimRng = ChaCha8Rng;

/// Attempts allowed before a rejection sampler gives up.
pub const REJECTION_BUDGET: u64 = 1_000_000;
/// Minimum acceptance rate over [`REJECTION_BUDGET`] attempts.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-3;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed, a stream label and
/// an index.
///
/// The label is folded with 64-bit FNV-1a, then master, label hash and index
/// are combined through three SplitMix64 rounds. Chunked generators seed
/// chunk `i` with `derive_seed(master, label, i)`, so output does not depend
/// on thread count.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let a = mix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ h);
    mix64(b ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn stream_rng(master: u64, stream: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

impl NormalParams {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.sd * z
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.mean.is_finite() && self.mean > 0.0) {
            return Err(Error::Config(format!("{what}: mean must be positive")));
        }
        if !(self.sd.is_finite() && self.sd >= 0.0) {
            return Err(Error::Config(format!("{what}: sd must be >= 0")));
        }
        Ok(())
    }
}

/// Inflow and uveoscleral-outflow priors for one age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPriors {
    /// Aqueous humour inflow, m³/s.
    pub q_ah: NormalParams,
    /// Uveoscleral outflow, m³/s.
    pub f_u: NormalParams,
    /// Largest admissible `f_u / q_ah`.
    pub uveoscleral_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub young: GroupPriors,
    pub middle: GroupPriors,
    pub old: GroupPriors,
    /// Episcleral venous pressure, Pa, shared by all ages.
    pub evp: NormalParams,
}

impl Default for PriorSet {
    fn default() -> Self {
        Self {
            young: GroupPriors {
                q_ah: NormalParams::new(4.83e-11, 1.50e-11),
                f_u: NormalParams::new(2.53e-11, 1.35e-11),
                uveoscleral_cap: 0.60,
            },
            middle: GroupPriors {
                q_ah: NormalParams::new(4.33e-11, 1.33e-11),
                f_u: NormalParams::new(2.17e-11, 1.33e-11),
                uveoscleral_cap: 0.55,
            },
            old: GroupPriors {
                q_ah: NormalParams::new(4.00e-11, 1.17e-11),
                f_u: NormalParams::new(1.83e-11, 1.35e-11),
                uveoscleral_cap: 0.50,
            },
            evp: NormalParams::new(1200.0, 200.0),
        }
    }
}

/// Table of hydrodynamic priors by age group, see [`PriorSet::default`].
pub fn default_priors() -> PriorSet {
    PriorSet::default()
}

impl PriorSet {
    pub fn group(&self, group: AgeGroup) -> &GroupPriors {
        match group {
            AgeGroup::Young => &self.young,
            AgeGroup::Middle => &self.middle,
            AgeGroup::Old => &self.old,
        }
    }

    fn group_mut(&mut self, group: AgeGroup) -> &mut GroupPriors {
        match group {
            AgeGroup::Young => &mut self.young,
            AgeGroup::Middle => &mut self.middle,
            AgeGroup::Old => &mut self.old,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in AgeGroup::ALL {
            let p = self.group(g);
            p.q_ah.validate(&format!("{} q_ah", g.name()))?;
            p.f_u.validate(&format!("{} f_u", g.name()))?;
            if !(p.uveoscleral_cap > 0.0 && p.uveoscleral_cap <= 1.0) {
                return Err(Error::Config(format!(
                    "{} uveoscleral cap must lie in (0, 1]",
                    g.name()
                )));
            }
        }
        self.evp.validate("evp")
    }

    /// Every standard deviation multiplied by `factor`.
    pub fn with_sd_scale(mut self, factor: f64) -> Self {
        for g in AgeGroup::ALL {
            let p = self.group_mut(g);
            p.q_ah.sd *= factor;
            p.f_u.sd *= factor;
        }
        self.evp.sd *= factor;
        self
    }

    /// Inflow means multiplied by `factor`, everything else unchanged.
    pub fn with_inflow_mean_scale(mut self, factor: f64) -> Self {
        for g in AgeGroup::ALL {
            self.group_mut(g).q_ah.mean *= factor;
        }
        self
    }

    /// Every distribution collapsed onto its mean.
    pub fn degenerate(self) -> Self {
        self.with_sd_scale(0.0)
    }
}

/// One accepted prior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorDraw {
    pub q_ah: FlowRate,
    pub f_u: FlowRate,
    pub evp: Pressure,
}

impl PriorDraw {
    pub fn net_flow(&self) -> f64 {
        self.q_ah.value() - self.f_u.value()
    }
}

/// `q_ah > f_u > 0`, `evp > 0` and `f_u <= cap·q_ah`.
pub fn is_plausible(priors: &PriorSet, group: AgeGroup, draw: &PriorDraw) -> bool {
    let cap = priors.group(group).uveoscleral_cap;
    let (q, f, e) = (draw.q_ah.value(), draw.f_u.value(), draw.evp.value());
    q > f && f > 0.0 && e > 0.0 && f <= cap * q
}

/// Draws `n` independent prior states that pass [`is_plausible`].
pub fn sample_constrained<R: Rng + ?Sized>(
    priors: &PriorSet,
    group: AgeGroup,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PriorDraw>> {
    if n == 0 {
        return Err(Error::InsufficientData(
            "at least one sample is required".into(),
        ));
    }
    let p = priors.group(group);
    let mut out = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while out.len() < n {
        attempts += 1;
        let draw = PriorDraw {
            q_ah: FlowRate::new(p.q_ah.sample(rng)),
            f_u: FlowRate::new(p.f_u.sample(rng)),
            evp: Pressure::new(priors.evp.sample(rng)),
        };
        if is_plausible(priors, group, &draw) {
            out.push(draw);
        }
        if attempts >= REJECTION_BUDGET
            && (out.len() as f64) < MIN_ACCEPTANCE_RATE * attempts as f64
        {
            return Err(Error::SamplingExhausted {
                context: format!("{} hydrodynamic priors", group.name()),
                attempts,
                accepted: out.len() as u64,
            });
        }
    }
    Ok(out)
}

/// Componentwise mean of `n` plausible draws. The constraint set is convex,
/// so the mean is itself plausible.
pub fn constrained_mean<R: Rng + ?Sized>(
    priors: &PriorSet,
    group: AgeGroup,
    n: usize,
    rng: &mut R,
) -> Result<PriorDraw> {
    let draws = sample_constrained(priors, group, n, rng)?;
    let avg = |f: fn(&PriorDraw) -> f64| draws.iter().map(f).sum::<f64>() / n as f64;
    Ok(PriorDraw {
        q_ah: FlowRate::new(avg(|d| d.q_ah.value())),
        f_u: FlowRate::new(avg(|d| d.f_u.value())),
        evp: Pressure::new(avg(|d| d.evp.value())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhsDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhsDesign {
    pub n: usize,
    pub dims: Vec<LhsDim>,
}

impl LhsDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("LHS design needs n >= 1".into()));
        }
        for d in &self.dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Config(format!(
                    "LHS dimension `{}` needs lower < upper",
                    d.name
                )));
            }
            if d.scale == Scale::Log10 && d.lower <= 0.0 {
                return Err(Error::Config(format!(
                    "log-scaled LHS dimension `{}` needs a positive lower bound",
                    d.name
                )));
            }
        }
        Ok(())
    }
}

impl LhsDim {
    /// Maps a unit-interval coordinate onto the dimension.
    pub fn map_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log10 => {
                let (lo, hi) = (self.lower.log10(), self.upper.log10());
                10f64.powf(lo + u * (hi - lo))
            }
        }
    }

    /// Position of `value` on the unit interval (inverse of [`LhsDim::map_unit`]).
    pub fn unit_of(&self, value: f64) -> f64 {
        match self.scale {
            Scale::Linear => (value - self.lower) / (self.upper - self.lower),
            Scale::Log10 => {
                let (lo, hi) = (self.lower.log10(), self.upper.log10());
                (value.log10() - lo) / (hi - lo)
            }
        }
    }
}

/// Unit-interval coordinate inside stratum `stratum` of `n`.
pub fn jitter_in_stratum<R: Rng + ?Sized>(stratum: usize, n: usize, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    ((stratum as f64 + u) / n as f64).min(1.0 - f64::EPSILON)
}

/// Latin hypercube sample: row `i`, column `d`.
pub fn lhs_sample<R: Rng + ?Sized>(design: &LhsDesign, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    design.validate()?;
    let n = design.n;
    let mut rows = vec![Vec::with_capacity(design.dims.len()); n];
    for dim in &design.dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (row, &s) in rows.iter_mut().zip(&strata) {
            row.push(dim.map_unit(jitter_in_stratum(s, n, rng)));
        }
    }
    Ok(rows)
}
