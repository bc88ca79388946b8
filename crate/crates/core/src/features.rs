//! Feature layouts shared by dataset generation, training and inference.

use crate::gbt::{CategoricalEncoding, FeatureSchema};
use crate::units::AgeGroup;

pub const STAGE1_FEATURES: [&str; 7] = [
    "iop",
    "q_ah",
    "f_u",
    "evp",
    "age_group=Young",
    "age_group=Middle",
    "age_group=Old",
];

pub const STAGE2_FEATURES: [&str; 6] = [
    "predicted_log10_ktm",
    "iop_calibrated",
    "q_ah",
    "f_u",
    "evp",
    "age_years",
];

pub fn stage1_schema() -> FeatureSchema {
    FeatureSchema {
        names: STAGE1_FEATURES.iter().map(|s| s.to_string()).collect(),
        categorical: vec![CategoricalEncoding {
            source: "age_group".into(),
            levels: AgeGroup::ALL.iter().map(|g| g.name().to_string()).collect(),
            first_column: 4,
        }],
    }
}

pub fn stage2_schema() -> FeatureSchema {
    FeatureSchema::numeric(STAGE2_FEATURES)
}

/// Stage 1 inputs in SI units with the age group one-hot encoded.
pub fn stage1_features(iop_pa: f64, q_ah: f64, f_u: f64, evp_pa: f64, group: AgeGroup) -> [f64; 7] {
    let mut row = [iop_pa, q_ah, f_u, evp_pa, 0.0, 0.0, 0.0];
    row[4 + group.index()] = 1.0;
    row
}

pub fn stage2_features(
    predicted_log10_ktm: f64,
    iop_calibrated_pa: f64,
    q_ah: f64,
    f_u: f64,
    evp_pa: f64,
    age_years: f64,
) -> [f64; 6] {
    [
        predicted_log10_ktm,
        iop_calibrated_pa,
        q_ah,
        f_u,
        evp_pa,
        age_years,
    ]
}
