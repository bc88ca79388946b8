//! Rank, agreement and regression statistics used by the validation harness.

mod agreement;
mod bootstrap;
mod descriptive;
mod nonparametric;
mod regression;

pub use agreement::{bland_altman, cohens_kappa, icc_2_1, BlandAltman};
pub use bootstrap::bootstrap_ci;
pub use descriptive::{average_ranks, mean, quantile, quantile_sorted, sample_sd, Summary};
pub use nonparametric::{
    kruskal_wallis, mann_whitney_bonferroni, mann_whitney_u, spearman_rho, wilcoxon_signed_rank,
    PairwiseTest, EXACT_MWU_MAX_MIN_GROUP, EXACT_WILCOXON_MAX_N,
};
pub use regression::{deming_fit, ols_fit, DemingFit, OlsFit};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    /// Student-t approximation (Spearman).
    TApprox,
    /// Chi-square approximation (Kruskal-Wallis).
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

impl TestResult {
    pub(crate) fn new(statistic: f64, p_value: f64, method: TestMethod) -> Self {
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            method,
        }
    }
}
