use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::descriptive::mean;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    /// Two-sided p-value of the slope t-statistic.
    pub p_slope: f64,
    pub r2_adj: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemingFit {
    pub intercept: f64,
    pub slope: f64,
    /// Ratio of y-error variance to x-error variance.
    pub variance_ratio: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::domain("regression: length mismatch"));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(
            "regression needs at least 3 points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("regression: non-finite value"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    Ok((mx, my, sxx, syy, sxy))
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    let (mx, my, sxx, syy, sxy) = moments(x, y)?;
    if sxx == 0.0 {
        return Err(Error::degenerate("ols: zero variance in x"));
    }
    let n = x.len();
    let nf = n as f64;
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = sse / (nf - 2.0);
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let p_slope = if se_slope > 0.0 {
        let t = slope / se_slope;
        2.0 * StudentsT::new(0.0, 1.0, nf - 2.0)
            .expect("positive df")
            .sf(t.abs())
    } else if slope != 0.0 {
        0.0
    } else {
        1.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let r2_adj = 1.0 - (1.0 - r2) * (nf - 1.0) / (nf - 2.0);
    Ok(OlsFit {
        intercept,
        slope,
        se_intercept,
        se_slope,
        p_slope,
        r2_adj,
        n,
    })
}

pub fn deming_fit(x: &[f64], y: &[f64], variance_ratio: f64) -> Result<DemingFit> {
    if !(variance_ratio.is_finite() && variance_ratio > 0.0) {
        return Err(Error::domain("deming: variance ratio must be positive"));
    }
    let (mx, my, sxx, syy, sxy) = moments(x, y)?;
    if sxy == 0.0 {
        return Err(Error::degenerate("deming: zero covariance"));
    }
    let d = variance_ratio;
    let a = syy - d * sxx;
    let slope = (a + (a * a + 4.0 * d * sxy * sxy).sqrt()) / (2.0 * sxy);
    Ok(DemingFit {
        intercept: my - slope * mx,
        slope,
        variance_ratio,
    })
}
