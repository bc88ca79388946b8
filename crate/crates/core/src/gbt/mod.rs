//! Exact-greedy gradient-boosted regression trees with squared-error loss.

mod data;
mod model;
mod train;
mod tuning;

pub use data::{CategoricalEncoding, Dataset, FeatureSchema};
pub use model::{Node, Tree, TreeEnsemble, MODEL_FORMAT, MODEL_VERSION};
pub use train::train;
pub use tuning::{
    evaluate, fit_with_holdout, permutation_importance, random_search, split_80_20, FitReport,
    ParamRange, SearchOutcome, SearchSpace, IMPORTANCE_REPEATS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtHyperparams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    /// Minimum loss reduction for a split.
    pub gamma: f64,
    /// L1 penalty on leaf weights.
    pub reg_alpha: f64,
    /// L2 penalty on leaf weights.
    pub reg_lambda: f64,
}

impl GbtHyperparams {
    /// Tuned values for the permeability model.
    pub const fn stage1() -> Self {
        Self {
            n_estimators: 425,
            learning_rate: 0.0851,
            max_depth: 12,
            subsample: 0.7307,
            colsample_bytree: 0.9356,
            gamma: 0.4302,
            reg_alpha: 0.3033,
            reg_lambda: 0.5371,
        }
    }

    /// Tuned values for the geometry model. The penalties are unpublished and
    /// take the conventional 0 and 1.
    pub const fn stage2() -> Self {
        Self {
            n_estimators: 491,
            learning_rate: 0.1731,
            max_depth: 3,
            subsample: 0.8645,
            colsample_bytree: 0.5994,
            gamma: 0.0028,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !unit(self.subsample) || !unit(self.colsample_bytree) {
            return Err(Error::Config(
                "subsample and colsample_bytree must lie in (0, 1]".into(),
            ));
        }
        if !nonneg(self.gamma) || !nonneg(self.reg_alpha) || !nonneg(self.reg_lambda) {
            return Err(Error::Config(
                "gamma, reg_alpha and reg_lambda must be ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        GbtHyperparams::stage1().validate().unwrap();
        GbtHyperparams::stage2().validate().unwrap();
        let mut hp = GbtHyperparams::stage2();
        hp.subsample = 0.0;
        assert!(hp.validate().is_err());
    }
}
