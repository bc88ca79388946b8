//! Closed-form forward models of aqueous outflow.
//!
//! Darcy flow through the trabecular meshwork gives the facility as
//! `C = K·G/µ`, the Goldmann balance gives `IOP = (Q_AH − F_u)/C + EVP`, and
//! Kozeny-Carman relates permeability to an effective pore diameter. The
//! high-fidelity reference model is emulated by adding a linear pressure
//! dependent bias to the Goldmann IOP.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{
    AgeGroup, Facility, FlowRate, GeometryFactor, HydrodynamicState, Permeability, Pressure,
    Viscosity,
};

/// Smallest IOP − EVP drop accepted by any inversion.
pub const MIN_PRESSURE_DROP_PA: f64 = 10.0;

/// Kozeny constant used for pore-diameter estimates.
pub const DEFAULT_KOZENY_CONSTANT: f64 = 150.0;

/// Linear bias `intercept + slope·IOP` (mmHg) between the reference model and Goldmann.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasLine {
    pub intercept: f64,
    pub slope: f64,
}

impl Default for BiasLine {
    fn default() -> Self {
        Self {
            intercept: 2.654,
            slope: -0.233,
        }
    }
}

impl BiasLine {
    pub const ZERO: BiasLine = BiasLine {
        intercept: 0.0,
        slope: 0.0,
    };

    pub fn new(intercept: f64, slope: f64) -> Result<Self> {
        let line = Self { intercept, slope };
        line.validate()?;
        Ok(line)
    }

    /// |slope| < 1 keeps `IOP ↦ IOP + bias(IOP)` strictly increasing.
    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() || !self.slope.is_finite() {
            return Err(Error::domain("bias line coefficients must be finite"));
        }
        if self.slope.abs() >= 1.0 {
            return Err(Error::domain(format!(
                "bias slope {} would make the calibrated IOP non-monotone",
                self.slope
            )));
        }
        Ok(())
    }

    /// Bias in mmHg at a Goldmann IOP in mmHg.
    pub fn eval(&self, iop_goldmann_mmhg: f64) -> f64 {
        self.intercept + self.slope * iop_goldmann_mmhg
    }

    /// `IOP_G + bias(IOP_G)`.
    pub fn calibrate(&self, iop_goldmann: Pressure) -> Pressure {
        let mmhg = iop_goldmann.mmhg();
        Pressure::from_mmhg(mmhg + self.eval(mmhg))
    }

    /// Inverse of [`BiasLine::calibrate`].
    pub fn uncalibrate(&self, iop_calibrated: Pressure) -> Pressure {
        Pressure::from_mmhg((iop_calibrated.mmhg() - self.intercept) / (1.0 + self.slope))
    }

    /// Goldmann IOP at which the bias vanishes, if any.
    pub fn root(&self) -> Option<f64> {
        (self.slope != 0.0).then(|| -self.intercept / self.slope)
    }
}

/// Bias correction in mmHg.
pub fn bias(iop_goldmann_mmhg: f64, line: &BiasLine) -> f64 {
    line.eval(iop_goldmann_mmhg)
}

/// Trabecular-meshwork porosity per age group and the Kozeny constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PorosityTable {
    pub young: f64,
    pub middle: f64,
    pub old: f64,
    pub kozeny_k: f64,
}

impl Default for PorosityTable {
    fn default() -> Self {
        Self {
            young: 0.25,
            middle: 0.22,
            old: 0.18,
            kozeny_k: DEFAULT_KOZENY_CONSTANT,
        }
    }
}

impl PorosityTable {
    pub fn porosity(&self, group: AgeGroup) -> f64 {
        match group {
            AgeGroup::Young => self.young,
            AgeGroup::Middle => self.middle,
            AgeGroup::Old => self.old,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for eps in [self.young, self.middle, self.old] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::domain(format!("porosity {eps} outside (0, 1)")));
            }
        }
        if !(self.kozeny_k > 0.0 && self.kozeny_k.is_finite()) {
            return Err(Error::domain("Kozeny constant must be positive"));
        }
        Ok(())
    }
}

/// Outflow-path geometry factor (A/L) per age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryTable {
    pub young: f64,
    pub middle: f64,
    pub old: f64,
}

impl Default for GeometryTable {
    fn default() -> Self {
        Self {
            young: 0.148,
            middle: 0.148,
            old: 0.148,
        }
    }
}

impl GeometryTable {
    pub fn factor(&self, group: AgeGroup) -> GeometryFactor {
        GeometryFactor(match group {
            AgeGroup::Young => self.young,
            AgeGroup::Middle => self.middle,
            AgeGroup::Old => self.old,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.young, self.middle, self.old] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::domain(format!(
                    "geometry factor {g} must be positive"
                )));
            }
        }
        Ok(())
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Goldmann steady state: `(q_ah − f_u)/c_trab + evp`.
pub fn goldmann_iop(
    q_ah: FlowRate,
    f_u: FlowRate,
    c_trab: Facility,
    evp: Pressure,
) -> Result<Pressure> {
    require_positive("facility", c_trab.value())?;
    if q_ah.value() <= f_u.value() {
        return Err(Error::Constraint(format!(
            "inflow {:e} does not exceed uveoscleral outflow {:e}",
            q_ah.value(),
            f_u.value()
        )));
    }
    Ok(Pressure::new(
        (q_ah.value() - f_u.value()) / c_trab.value() + evp.value(),
    ))
}

/// Darcy facility `K·G/µ`.
pub fn facility_from_permeability(
    k_tm: Permeability,
    g: GeometryFactor,
    mu: Viscosity,
) -> Result<Facility> {
    require_positive("permeability", k_tm.0)?;
    require_positive("geometry factor", g.0)?;
    require_positive("viscosity", mu.0)?;
    Ok(Facility::new(k_tm.0 * g.0 / mu.0))
}

/// Inverse of [`facility_from_permeability`]: `C·µ/G`.
pub fn permeability_from_facility(
    c_trab: Facility,
    g: GeometryFactor,
    mu: Viscosity,
) -> Result<Permeability> {
    require_positive("facility", c_trab.value())?;
    require_positive("geometry factor", g.0)?;
    require_positive("viscosity", mu.0)?;
    Ok(Permeability(c_trab.value() * mu.0 / g.0))
}

/// Reference-model IOP: Goldmann plus the bias line plus optional Gaussian
/// noise with standard deviation `noise_sd_mmhg`.
pub fn fem_emulator_iop<R: Rng + ?Sized>(
    q_ah: FlowRate,
    f_u: FlowRate,
    c_trab: Facility,
    evp: Pressure,
    line: &BiasLine,
    noise_sd_mmhg: f64,
    rng: &mut R,
) -> Result<Pressure> {
    if !(noise_sd_mmhg >= 0.0 && noise_sd_mmhg.is_finite()) {
        return Err(Error::domain(format!(
            "noise sd {noise_sd_mmhg} must be >= 0"
        )));
    }
    let iop_g = goldmann_iop(q_ah, f_u, c_trab, evp)?;
    let calibrated = line.calibrate(iop_g);
    if noise_sd_mmhg == 0.0 {
        return Ok(calibrated);
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(Pressure::from_mmhg(calibrated.mmhg() + noise_sd_mmhg * z))
}

fn check_porosity(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("porosity {eps} outside (0, 1)")))
    }
}

/// Kozeny-Carman solved for the pore diameter (m).
pub fn pore_diameter(k_tm: Permeability, eps: f64, kozeny_k: f64) -> Result<f64> {
    check_porosity(eps)?;
    require_positive("permeability", k_tm.0)?;
    require_positive("Kozeny constant", kozeny_k)?;
    Ok((k_tm.0 * kozeny_k * (1.0 - eps).powi(2) / eps.powi(3)).sqrt())
}

/// Kozeny-Carman permeability `D²·ε³ / (k·(1−ε)²)`.
pub fn kozeny_carman_permeability(d_p: f64, eps: f64, kozeny_k: f64) -> Result<Permeability> {
    check_porosity(eps)?;
    require_positive("pore diameter", d_p)?;
    require_positive("Kozeny constant", kozeny_k)?;
    Ok(Permeability(
        d_p * d_p * eps.powi(3) / (kozeny_k * (1.0 - eps).powi(2)),
    ))
}

/// Exact inverse of the Goldmann and Darcy relations for a state whose IOP
/// is a Goldmann IOP: `K = (q_ah − f_u)/(iop − evp) · µ/G`.
pub fn stage1_analytic_oracle(
    state: &HydrodynamicState,
    g: GeometryFactor,
    mu: Viscosity,
) -> Result<Permeability> {
    require_positive("geometry factor", g.0)?;
    require_positive("viscosity", mu.0)?;
    let drop = state.iop.value() - state.evp.value();
    if drop.is_nan() || drop < MIN_PRESSURE_DROP_PA {
        return Err(Error::domain(format!(
            "IOP − EVP = {drop} Pa is below the {MIN_PRESSURE_DROP_PA} Pa inversion guard"
        )));
    }
    let net = state.q_ah.value() - state.f_u.value();
    if net <= 0.0 {
        return Err(Error::Constraint(
            "inflow must exceed uveoscleral outflow".into(),
        ));
    }
    Ok(Permeability(net / drop * mu.0 / g.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ClinicalUnit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn goldmann_clinical_example() {
        let iop = goldmann_iop(
            FlowRate::from_ul_min(2.9),
            FlowRate::from_ul_min(1.5),
            Facility::from_ul_min_mmhg(0.25),
            Pressure::from_mmhg(9.0),
        )
        .unwrap();
        assert!((iop.mmhg() - 14.6).abs() < 1e-9);
    }

    #[test]
    fn goldmann_zero_net_flow_limit() {
        let evp = Pressure::new(1200.0);
        let iop = goldmann_iop(
            FlowRate::new(2.0e-11 + 1e-24),
            FlowRate::new(2.0e-11),
            Facility::from_ul_min_mmhg(0.05),
            evp,
        )
        .unwrap();
        assert!((iop.value() - evp.value()).abs() < 1e-6);
    }

    #[test]
    fn goldmann_anchor_state() {
        // Net flow 7.37e-11 − 3.36e-11 through the back-solved facility.
        let iop = goldmann_iop(
            FlowRate::new(7.37e-11),
            FlowRate::new(3.36e-11),
            Facility::new(1.055e-14),
            Pressure::new(1500.0),
        )
        .unwrap();
        assert!((iop.value() - 5300.5).abs() < 1.0, "{}", iop.value());
    }

    #[test]
    fn goldmann_errors() {
        let q = FlowRate::new(3e-11);
        let f = FlowRate::new(1e-11);
        let evp = Pressure::new(1200.0);
        assert!(matches!(
            goldmann_iop(q, f, Facility::new(0.0), evp),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            goldmann_iop(f, q, Facility::new(1e-14), evp),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn darcy_anchor() {
        let mu = Viscosity(7e-4);
        let c = facility_from_permeability(Permeability(5e-17), GeometryFactor(0.148), mu).unwrap();
        assert!(rel(c.value(), 1.057e-14) < 1e-3);
        assert!((c.to_clinical().unwrap() - 0.0846).abs() < 1e-3);
        let k = permeability_from_facility(Facility::new(1.057e-14), GeometryFactor(0.148), mu)
            .unwrap();
        assert!(rel(k.0, 5.0e-17) < 1e-3);
    }

    #[test]
    fn darcy_linearity_and_limits() {
        let mu = Viscosity(7e-4);
        let g = GeometryFactor(0.1);
        let c1 = facility_from_permeability(Permeability(1e-16), g, mu).unwrap();
        let c2 = facility_from_permeability(Permeability(2e-16), g, mu).unwrap();
        assert!(rel(c2.value(), 2.0 * c1.value()) < 1e-15);
        let k =
            permeability_from_facility(Facility::new(1e-14), GeometryFactor(1e300), mu).unwrap();
        assert!(k.0 < 1e-300);
        assert!(facility_from_permeability(Permeability(-1.0), g, mu).is_err());
        assert!(permeability_from_facility(Facility::new(1e-14), g, Viscosity(0.0)).is_err());
    }

    #[test]
    fn bias_values() {
        let line = BiasLine::default();
        assert_eq!(bias(0.0, &line), 2.654);
        assert!((bias(10.0, &line) - 0.324).abs() < 1e-12);
        let root = line.root().unwrap();
        assert!((root - 11.391).abs() < 5e-4);
        assert!(bias(root, &line).abs() < 1e-12);
        assert!(BiasLine::new(0.0, 1.0).is_err());
        assert!(BiasLine::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn emulator_noise_free() {
        let line = BiasLine::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let evp = Pressure::from_mmhg(9.0);
        let q = FlowRate::from_ul_min(2.0);
        let f = FlowRate::from_ul_min(1.0);
        // IOP_G = 10 mmHg with a 1 mmHg drop.
        let c = Facility::from_ul_min_mmhg(1.0);
        let iop = fem_emulator_iop(q, f, c, evp, &line, 0.0, &mut rng).unwrap();
        assert!((iop.mmhg() - 10.324).abs() < 1e-9);

        let root = line.root().unwrap();
        let c = Facility::from_ul_min_mmhg(1.0 / (root - 9.0));
        let iop = fem_emulator_iop(q, f, c, evp, &line, 0.0, &mut rng).unwrap();
        assert!((iop.mmhg() - root).abs() < 1e-9);
        assert!(fem_emulator_iop(q, f, c, evp, &line, -1.0, &mut rng).is_err());
    }

    #[test]
    fn emulator_is_seed_deterministic() {
        let line = BiasLine::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| {
                    fem_emulator_iop(
                        FlowRate::new(4e-11),
                        FlowRate::new(2e-11),
                        Facility::new(2e-14),
                        Pressure::new(1200.0),
                        &line,
                        3.5,
                        &mut rng,
                    )
                    .unwrap()
                    .value()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn emulator_increasing_in_resistance() {
        let line = BiasLine::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = f64::NEG_INFINITY;
        for i in 1..=200 {
            let resistance = i as f64 * 0.1; // mmHg·min/µL
            let c = Facility::from_ul_min_mmhg(1.0 / resistance);
            let iop = fem_emulator_iop(
                FlowRate::from_ul_min(2.5),
                FlowRate::from_ul_min(1.2),
                c,
                Pressure::new(1200.0),
                &line,
                0.0,
                &mut rng,
            )
            .unwrap()
            .value();
            assert!(iop > last);
            last = iop;
        }
    }

    #[test]
    fn pore_diameter_example() {
        let d = pore_diameter(Permeability(5.72e-15), 0.22, 150.0).unwrap();
        assert!((d - 7.0e-6).abs() < 0.05e-6, "{d}");
        let k = kozeny_carman_permeability(d, 0.22, 150.0).unwrap();
        assert!(rel(k.0, 5.72e-15) < 1e-12);
        let d4 = pore_diameter(Permeability(4.0 * 5.72e-15), 0.22, 150.0).unwrap();
        assert!(rel(d4, 2.0 * d) < 1e-12);
        assert!(pore_diameter(Permeability(1e-15), 1.0, 150.0).is_err());
        assert!(pore_diameter(Permeability(1e-15), 0.0, 150.0).is_err());
    }

    fn anchor_state() -> HydrodynamicState {
        let mu = Viscosity(7e-4);
        let c = facility_from_permeability(Permeability(5e-17), GeometryFactor(0.148), mu).unwrap();
        let q = FlowRate::new(7.37e-11);
        let f = FlowRate::new(3.36e-11);
        let evp = Pressure::new(1500.0);
        HydrodynamicState {
            iop: goldmann_iop(q, f, c, evp).unwrap(),
            q_ah: q,
            f_u: f,
            evp,
            age_years: 60.0,
        }
    }

    #[test]
    fn analytic_oracle_recovers_anchor() {
        let k = stage1_analytic_oracle(&anchor_state(), GeometryFactor(0.148), Viscosity(7e-4))
            .unwrap();
        assert!(rel(k.0, 5e-17) < 1e-10);
    }

    #[test]
    fn analytic_oracle_linear_and_guarded() {
        let g = GeometryFactor(0.148);
        let mu = Viscosity(7e-4);
        let mut s = anchor_state();
        let k1 = stage1_analytic_oracle(&s, g, mu).unwrap();
        s.q_ah = FlowRate::new(s.f_u.value() + 2.0 * (7.37e-11 - 3.36e-11));
        let k2 = stage1_analytic_oracle(&s, g, mu).unwrap();
        assert!(rel(k2.0, 2.0 * k1.0) < 1e-12);
        s.iop = Pressure::new(s.evp.value() + 5.0);
        assert!(matches!(
            stage1_analytic_oracle(&s, g, mu),
            Err(Error::Domain(_))
        ));
    }
}
