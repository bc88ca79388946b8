//! Clinical cohort descriptors and their expansion into synthetic patient
//! populations.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::Provenance;
use crate::error::{Error, Result};
use crate::inference::PatientInput;
use crate::pcds::{write_table, Table};
use crate::risk::RiskLabel;
use crate::sampling::{NormalParams, MIN_ACCEPTANCE_RATE, REJECTION_BUDGET};
use crate::units::{AgeGroup, Pressure};

pub const COHORT_COLUMNS: [&str; 12] = [
    "id",
    "source",
    "description",
    "tags",
    "poag_fraction",
    "mean_of",
    "age_mean",
    "age_sd",
    "iop_mean",
    "iop_sd",
    "n",
    "label",
];

pub const DEFAULT_POPULATION_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosisTag {
    Healthy,
    /// Ocular hypertension.
    OHT,
    POAG,
    OAG,
    Glaucoma,
    /// Mixed OHT and glaucoma.
    Mixed,
    Ambiguous,
}

impl DiagnosisTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisTag::Healthy => "Healthy",
            DiagnosisTag::OHT => "OHT",
            DiagnosisTag::POAG => "POAG",
            DiagnosisTag::OAG => "OAG",
            DiagnosisTag::Glaucoma => "Glaucoma",
            DiagnosisTag::Mixed => "Mixed",
            DiagnosisTag::Ambiguous => "Ambiguous",
        }
    }
}

impl fmt::Display for DiagnosisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosisTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            DiagnosisTag::Healthy,
            DiagnosisTag::OHT,
            DiagnosisTag::POAG,
            DiagnosisTag::OAG,
            DiagnosisTag::Glaucoma,
            DiagnosisTag::Mixed,
            DiagnosisTag::Ambiguous,
        ]
        .into_iter()
        .find(|t| t.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::domain(format!("unknown diagnosis tag `{s}`")))
    }
}

/// Reported cohort summary statistics. Ages in years, IOP in mmHg, outflow
/// facility in µL/min/mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub age_mean: f64,
    pub age_sd: f64,
    pub iop_mean: f64,
    pub iop_sd: f64,
    pub of_mean: Option<f64>,
    pub of_sd: Option<f64>,
    pub n: usize,
}

impl SummaryStats {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("age_sd", self.age_sd), ("iop_sd", self.iop_sd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} = {v} must be ≥ 0")));
            }
        }
        if let Some(sd) = self.of_sd {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::domain(format!("of_sd = {sd} must be ≥ 0")));
            }
        }
        if !(self.age_mean.is_finite() && self.iop_mean.is_finite()) {
            return Err(Error::domain("cohort means must be finite"));
        }
        if self.n == 0 {
            return Err(Error::domain("cohort size must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDescriptor {
    pub id: u32,
    pub source: String,
    pub description: String,
    pub diagnosis_tags: BTreeSet<DiagnosisTag>,
    pub poag_fraction: Option<f64>,
    /// Reported mean outflow facility, µL/min/mmHg.
    pub mean_of: Option<f64>,
    pub stats: Option<SummaryStats>,
    /// Curated label, when the file carries one.
    pub label: Option<RiskLabel>,
}

impl CohortDescriptor {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.poag_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::domain(format!("poag_fraction {f} outside [0, 1]")));
            }
        }
        if let Some(of) = self.mean_of {
            if !(of.is_finite() && of > 0.0) {
                return Err(Error::domain(format!("mean_of {of} must be positive")));
            }
        }
        if let Some(s) = &self.stats {
            s.validate()?;
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn read_cohorts<R: Read>(r: R) -> Result<Vec<CohortDescriptor>> {
    let t = Table::read(r, &COHORT_COLUMNS)?;
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let id = t
            .str(i, 0)
            .parse()
            .map_err(|_| t.fail(i, 0, "id must be a non-negative integer"))?;
        let mut tags = BTreeSet::new();
        for s in t
            .str(i, 3)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            tags.insert(
                s.parse::<DiagnosisTag>()
                    .map_err(|e| t.fail(i, 3, e.to_string()))?,
            );
        }
        let poag_fraction = t.opt_f64(i, 4)?;
        if poag_fraction.is_some_and(|f| !(0.0..=1.0).contains(&f)) {
            return Err(t.fail(i, 4, "fraction must lie in [0, 1]"));
        }
        let mean_of = t.opt_f64(i, 5)?;
        if mean_of.is_some_and(|v| v <= 0.0) {
            return Err(t.fail(i, 5, "outflow facility must be positive"));
        }
        let stat_cols: Vec<Option<f64>> =
            (6..10).map(|c| t.opt_f64(i, c)).collect::<Result<_>>()?;
        for (k, v) in stat_cols.iter().enumerate() {
            if (k == 1 || k == 3) && v.is_some_and(|sd| sd < 0.0) {
                return Err(t.fail(i, 6 + k, "standard deviation must be ≥ 0"));
            }
        }
        let n_str = t.str(i, 10);
        let n: Option<usize> = if n_str.is_empty() {
            None
        } else {
            Some(
                n_str
                    .parse()
                    .map_err(|_| t.fail(i, 10, "n must be a positive integer"))?,
            )
        };
        if n == Some(0) {
            return Err(t.fail(i, 10, "n must be ≥ 1"));
        }
        let stats = match (stat_cols.as_slice(), n) {
            ([Some(am), Some(asd), Some(im), Some(isd)], Some(n)) => Some(SummaryStats {
                age_mean: *am,
                age_sd: *asd,
                iop_mean: *im,
                iop_sd: *isd,
                of_mean: mean_of,
                of_sd: None,
                n,
            }),
            ([None, None, None, None], None) => None,
            _ => return Err(t.fail(i, 6, "summary statistics must be all present or all empty")),
        };
        let label = match t.str(i, 11) {
            "" => None,
            s => Some(
                s.parse::<RiskLabel>()
                    .map_err(|e| t.fail(i, 11, e.to_string()))?,
            ),
        };
        out.push(CohortDescriptor {
            id,
            source: t.str(i, 1).to_string(),
            description: t.str(i, 2).to_string(),
            diagnosis_tags: tags,
            poag_fraction,
            mean_of,
            stats,
            label,
        });
    }
    Ok(out)
}

pub fn write_cohorts<W: Write>(
    w: W,
    cohorts: &[CohortDescriptor],
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_table(
        w,
        provenance,
        &COHORT_COLUMNS,
        cohorts.iter().map(|c| {
            let tags: Vec<&str> = c.diagnosis_tags.iter().map(|t| t.as_str()).collect();
            let s = c.stats.as_ref();
            vec![
                c.id.to_string(),
                c.source.clone(),
                c.description.clone(),
                tags.join(";"),
                fmt_opt(c.poag_fraction),
                fmt_opt(c.mean_of),
                fmt_opt(s.map(|s| s.age_mean)),
                fmt_opt(s.map(|s| s.age_sd)),
                fmt_opt(s.map(|s| s.iop_mean)),
                fmt_opt(s.map(|s| s.iop_sd)),
                s.map(|s| s.n.to_string()).unwrap_or_default(),
                c.label.map(|l| l.code().to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn load_cohorts(path: &Path) -> Result<Vec<CohortDescriptor>> {
    read_cohorts(std::fs::File::open(path)?)
}

pub fn save_cohorts(path: &Path, cohorts: &[CohortDescriptor]) -> Result<()> {
    write_cohorts(std::fs::File::create(path)?, cohorts, None)
}

/// Normal draws of age and IOP, with rejection below the minimum age and
/// at non-positive IOP.
pub fn synth_population<R: Rng + ?Sized>(
    s: &SummaryStats,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PatientInput>> {
    s.validate()?;
    let age = NormalParams::new(s.age_mean, s.age_sd);
    let iop = NormalParams::new(s.iop_mean, s.iop_sd);
    let mut out = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while out.len() < n {
        attempts += 1;
        let a = age.sample(rng);
        let p = iop.sample(rng);
        if a >= AgeGroup::MIN_AGE && p > 0.0 {
            out.push(PatientInput::new(a, Pressure::from_mmhg(p))?);
        }
        if attempts >= REJECTION_BUDGET
            && (out.len() as f64) < MIN_ACCEPTANCE_RATE * attempts as f64
        {
            return Err(Error::SamplingExhausted {
                context: "cohort population".into(),
                attempts,
                accepted: out.len() as u64,
            });
        }
    }
    Ok(out)
}
