use std::fmt::Write;

use outflow_core::gbt::FitReport;
use outflow_core::inference::{Parameter, PosteriorProfile, Scenario, SensitivityReport};
use outflow_core::pcds::CalibrationFit;
use outflow_core::pipeline::{ThresholdReport, ValidationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortLabel {
    pub id: u32,
    pub description: String,
    pub rule_label: String,
    pub curated_label: Option<String>,
}

pub fn calibration(fit: &CalibrationFit) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bias calibration (n = {})", fit.n);
    let _ = writeln!(s, "  {:<8} {:>12} {:>12}", "method", "intercept", "slope");
    let _ = writeln!(
        s,
        "  {:<8} {:>12.5} {:>12.5}",
        "OLS", fit.ols.intercept, fit.ols.slope
    );
    let _ = writeln!(
        s,
        "  {:<8} {:>12.5} {:>12.5}",
        "Deming", fit.deming.intercept, fit.deming.slope
    );
    let _ = writeln!(
        s,
        "  se(intercept) {:.5}  se(slope) {:.5}",
        fit.se_intercept, fit.se_slope
    );
    let _ = writeln!(
        s,
        "  slope p {:.3e}  adjusted R² {:.4}",
        fit.p_value_slope, fit.r2_adj
    );
    s
}

pub fn fit(stage: u8, r: &FitReport) -> String {
    format!(
        "stage {stage} model: held-out R² {:.4}, RMSE {:.4} (train {}, test {})\n",
        r.r2, r.rmse, r.n_train, r.n_test
    )
}

pub fn profile(p: &PosteriorProfile) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "patient age {:.1} y, IOP {:.2} mmHg, {} draws, seed {}",
        p.patient.age_years,
        p.patient.iop.mmhg(),
        p.provenance.n_draws,
        p.provenance.seed
    );
    let _ = writeln!(
        s,
        "  {:<7} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "param", "q05", "q25", "median", "q75", "q95", "CV"
    );
    for param in Parameter::ALL {
        let m = &p.summary[&param];
        let _ = writeln!(
            s,
            "  {:<7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4}",
            param.label(),
            m.q05,
            m.q25,
            m.median,
            m.q75,
            m.q95,
            m.cv
        );
    }
    s
}

pub fn validation(r: &ValidationReport) -> String {
    let a = &r.agreement;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "agreement of posterior-median C_trab with measured (n = {}, µL/min/mmHg)",
        a.n
    );
    let row = |s: &mut String, name: &str, v: f64, ci: (f64, f64)| {
        let _ = writeln!(
            s,
            "  {name:<14} {v:>10.4}   95% CI [{:.4}, {:.4}]",
            ci.0, ci.1
        );
    };
    row(&mut s, "bias", a.bland_altman.bias, a.bias_ci);
    row(
        &mut s,
        "LoA lower",
        a.bland_altman.loa_lower,
        a.loa_lower_ci,
    );
    row(
        &mut s,
        "LoA upper",
        a.bland_altman.loa_upper,
        a.loa_upper_ci,
    );
    row(&mut s, "Spearman rho", a.spearman.statistic, a.spearman_ci);
    row(&mut s, "ICC(2,1)", a.icc, a.icc_ci);
    let _ = writeln!(
        s,
        "  Spearman p {:.3e}; {} bootstrap resamples",
        a.spearman.p_value, a.n_resamples
    );
    s
}

pub fn thresholds(r: &ThresholdReport, cohorts: &[CohortLabel]) -> String {
    let mut s = String::new();
    let t = &r.thresholds;
    let _ = writeln!(
        s,
        "risk thresholds from {} patients per archetype",
        r.n_derive
    );
    let _ = writeln!(s, "  normal floor         {:.4e} m²", t.normal_floor.0);
    let _ = writeln!(
        s,
        "  compromised ceiling  {:.4e} m²",
        t.compromised_ceiling.0
    );
    if let Some(w) = &r.warning {
        let _ = writeln!(s, "  warning: {w}");
    }
    let _ = writeln!(
        s,
        "  {:<12} {:>12} {:<12}",
        "cohort", "median K_TM", "predicted"
    );
    for c in &r.cohorts {
        let _ = writeln!(
            s,
            "  {:<12} {:>12.4e} {:<12}",
            c.archetype,
            c.median_ktm,
            c.predicted.to_string()
        );
    }
    let _ = writeln!(
        s,
        "  accuracy {:.3}  kappa {:.3}  Kruskal-Wallis H {:.2} (p {:.3e})",
        r.score.accuracy, r.score.kappa, r.kruskal_wallis.statistic, r.kruskal_wallis.p_value
    );
    for p in &r.pairwise {
        let _ = writeln!(
            s,
            "  Mann-Whitney {} vs {}: U {:.1}, Bonferroni p {:.3e}",
            p.group_a, p.group_b, p.test.statistic, p.test.p_value
        );
    }
    if !cohorts.is_empty() {
        let agree = cohorts
            .iter()
            .filter(|c| c.curated_label.as_deref() == Some(c.rule_label.as_str()))
            .count();
        let _ = writeln!(
            s,
            "cohort ground truth ({agree}/{} match curated labels)",
            cohorts.len()
        );
        for c in cohorts {
            let _ = writeln!(
                s,
                "  {:>3} {:<50} {:<2} {}",
                c.id,
                c.description,
                c.rule_label,
                c.curated_label.as_deref().unwrap_or("-")
            );
        }
    }
    s
}

pub fn sensitivity(reports: &[SensitivityReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "patient age {:.1} y, IOP {:.2} mmHg (seed {})",
            r.patient.age_years,
            r.patient.iop.mmhg(),
            r.seed
        );
        let _ = writeln!(
            s,
            "  {:<12} {:<7} {:>12} {:>10} {:>10}",
            "scenario", "param", "median", "Δmedian %", "ΔCV %"
        );
        for sc in Scenario::ALL.iter().skip(1) {
            for p in Parameter::ALL {
                if let Some(e) = r.entry(*sc, p) {
                    let _ = writeln!(
                        s,
                        "  {:<12} {:<7} {:>12.4e} {:>+10.2} {:>+10.2}",
                        sc.label(),
                        p.label(),
                        e.median,
                        e.median_change_pct,
                        e.cv_change_pct
                    );
                }
            }
        }
    }
    s
}
