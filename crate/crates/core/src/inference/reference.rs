use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Parameter, PosteriorProfile};
use crate::error::{Error, Result};
use crate::pcds::Stage2Dataset;
use crate::physics::{pore_diameter, PorosityTable};
use crate::stats::quantile;
use crate::units::AgeGroup;

/// Population medians that profiles are normalized against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePopulation {
    pub id: String,
    pub medians: BTreeMap<Parameter, f64>,
}

impl ReferencePopulation {
    /// Medians over the calibrated synthetic population.
    pub fn from_stage2(id: &str, data: &Stage2Dataset, porosity: &PorosityTable) -> Result<Self> {
        if data.rows.is_empty() {
            return Err(Error::InsufficientData("empty reference population".into()));
        }
        let mut cols: BTreeMap<Parameter, Vec<f64>> = BTreeMap::new();
        for (r, l) in data.rows.iter().zip(&data.latent) {
            let eps = porosity.porosity(AgeGroup::of_age(r.age_years)?);
            let vals = [
                (Parameter::KTm, l.k_tm.0),
                (Parameter::G, l.g.0),
                (Parameter::CTrab, l.c_trab.value()),
                (
                    Parameter::DP,
                    pore_diameter(l.k_tm, eps, porosity.kozeny_k)?,
                ),
                (Parameter::QAh, r.q_ah.value()),
                (Parameter::FU, r.f_u.value()),
                (Parameter::Evp, r.evp.value()),
            ];
            for (p, v) in vals {
                cols.entry(p).or_default().push(v);
            }
        }
        let medians = cols
            .into_iter()
            .map(|(p, v)| Ok((p, quantile(&v, 0.5)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            id: id.into(),
            medians,
        })
    }

    pub fn median(&self, p: Parameter) -> Result<f64> {
        let m = *self.medians.get(&p).ok_or_else(|| {
            Error::Artifact(format!("reference `{}` lacks {}", self.id, p.label()))
        })?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::domain(format!(
                "reference median for {} must be positive",
                p.label()
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProfile {
    pub reference_id: String,
    /// Patient posterior median over reference median; 1 is at-reference.
    pub ratios: BTreeMap<Parameter, f64>,
}

pub fn normalize_profile(
    profile: &PosteriorProfile,
    reference: &ReferencePopulation,
) -> Result<NormalizedProfile> {
    let ratios = profile
        .summary
        .iter()
        .map(|(p, s)| Ok((*p, s.median / reference.median(*p)?)))
        .collect::<Result<_>>()?;
    Ok(NormalizedProfile {
        reference_id: reference.id.clone(),
        ratios,
    })
}
