//! SI value types for the outflow model and their clinical display units.
//!
//! Every quantity is stored in SI. Clinical units (mmHg, µL/min,
//! µL/min/mmHg) only appear at I/O boundaries through [`ClinicalUnit`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pascals per mmHg.
pub const PA_PER_MMHG: f64 = 133.322;
/// m³/s per µL/min.
pub const M3S_PER_UL_MIN: f64 = 1.0e-9 / 60.0;
/// m³/(s·Pa) per µL/min/mmHg.
pub const FACILITY_SI_PER_CLINICAL: f64 = M3S_PER_UL_MIN / PA_PER_MMHG;

/// Default aqueous humour dynamic viscosity near body temperature, Pa·s.
pub const DEFAULT_VISCOSITY: f64 = 7.0e-4;

/// Conversion between the canonical SI value and the clinical display unit.
pub trait ClinicalUnit: Sized {
    const SI_PER_CLINICAL: f64;
    const CLINICAL_UNIT: &'static str;

    fn si(&self) -> f64;
    fn from_si(value: f64) -> Self;

    fn to_clinical(&self) -> Result<f64> {
        let v = self.si();
        if !v.is_finite() {
            return Err(Error::domain(format!(
                "cannot convert non-finite value {v} to {}",
                Self::CLINICAL_UNIT
            )));
        }
        Ok(v / Self::SI_PER_CLINICAL)
    }

    fn from_clinical(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain(format!(
                "non-finite {} value {value}",
                Self::CLINICAL_UNIT
            )));
        }
        Ok(Self::from_si(value * Self::SI_PER_CLINICAL))
    }
}

macro_rules! si_quantity {
    ($(#[$meta:meta])* $name:ident, $unit:literal, $factor:expr, $clinical:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(f64);

        impl $name {
            #[doc = concat!("Construct from a value in ", $unit, ".")]
            pub const fn new(si: f64) -> Self {
                Self(si)
            }

            #[doc = concat!("Value in ", $unit, ".")]
            pub const fn value(self) -> f64 {
                self.0
            }
        }

        impl ClinicalUnit for $name {
            const SI_PER_CLINICAL: f64 = $factor;
            const CLINICAL_UNIT: &'static str = $clinical;

            fn si(&self) -> f64 {
                self.0
            }

            fn from_si(value: f64) -> Self {
                Self(value)
            }
        }
    };
}

si_quantity!(
    /// Pressure in pascals.
    Pressure, "Pa", PA_PER_MMHG, "mmHg"
);
si_quantity!(
    /// Volumetric flow rate in m³/s.
    FlowRate, "m³/s", M3S_PER_UL_MIN, "µL/min"
);
si_quantity!(
    /// Outflow facility in m³/(s·Pa).
    Facility, "m³/(s·Pa)", FACILITY_SI_PER_CLINICAL, "µL/min/mmHg"
);

impl Pressure {
    pub fn from_mmhg(mmhg: f64) -> Self {
        Self(mmhg * PA_PER_MMHG)
    }

    pub fn mmhg(self) -> f64 {
        self.0 / PA_PER_MMHG
    }
}

impl FlowRate {
    pub fn from_ul_min(ul_min: f64) -> Self {
        Self(ul_min * M3S_PER_UL_MIN)
    }
}

impl Facility {
    pub fn from_ul_min_mmhg(v: f64) -> Self {
        Self(v * FACILITY_SI_PER_CLINICAL)
    }

    pub fn ul_min_mmhg(self) -> f64 {
        self.0 / FACILITY_SI_PER_CLINICAL
    }
}

/// Intrinsic hydraulic permeability, m².
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permeability(pub f64);

impl Permeability {
    pub fn from_log10(log10: f64) -> Self {
        Self(10f64.powf(log10))
    }

    pub fn log10(self) -> f64 {
        self.0.log10()
    }
}

/// Effective area-to-length ratio of the outflow path, m.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeometryFactor(pub f64);

/// Dynamic viscosity, Pa·s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Viscosity(pub f64);

impl Default for Viscosity {
    fn default() -> Self {
        Self(DEFAULT_VISCOSITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    Young,
    Middle,
    Old,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Young, AgeGroup::Middle, AgeGroup::Old];

    /// Youngest age covered by the age-stratified priors and geometry.
    pub const MIN_AGE: f64 = 20.0;

    /// Young is [20, 34), Middle is [34, 55], Old is above 55.
    pub fn of_age(age_years: f64) -> Result<AgeGroup> {
        if !age_years.is_finite() || age_years < Self::MIN_AGE {
            return Err(Error::domain(format!(
                "age {age_years} is outside the supported range (>= {})",
                Self::MIN_AGE
            )));
        }
        Ok(if age_years < 34.0 {
            AgeGroup::Young
        } else if age_years <= 55.0 {
            AgeGroup::Middle
        } else {
            AgeGroup::Old
        })
    }

    pub fn index(self) -> usize {
        match self {
            AgeGroup::Young => 0,
            AgeGroup::Middle => 1,
            AgeGroup::Old => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeGroup::Young => "Young",
            AgeGroup::Middle => "Middle",
            AgeGroup::Old => "Old",
        }
    }

    pub fn parse(s: &str) -> Option<AgeGroup> {
        AgeGroup::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// Same as [`AgeGroup::of_age`].
pub fn age_group_of(age_years: f64) -> Result<AgeGroup> {
    AgeGroup::of_age(age_years)
}

/// One physiological state of the aqueous outflow system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydrodynamicState {
    pub iop: Pressure,
    pub q_ah: FlowRate,
    pub f_u: FlowRate,
    pub evp: Pressure,
    pub age_years: f64,
}

impl HydrodynamicState {
    /// Checks that the state can come out of a forward model.
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.iop.value(),
            self.q_ah.value(),
            self.f_u.value(),
            self.evp.value(),
            self.age_years,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite hydrodynamic state"));
        }
        if self.q_ah <= self.f_u {
            return Err(Error::Constraint(format!(
                "inflow {:e} must exceed uveoscleral outflow {:e}",
                self.q_ah.value(),
                self.f_u.value()
            )));
        }
        if self.iop <= self.evp {
            return Err(Error::Constraint(format!(
                "IOP {} Pa must exceed EVP {} Pa",
                self.iop.value(),
                self.evp.value()
            )));
        }
        Ok(())
    }

    pub fn net_trabecular_flow(&self) -> FlowRate {
        FlowRate::new(self.q_ah.value() - self.f_u.value())
    }
}
