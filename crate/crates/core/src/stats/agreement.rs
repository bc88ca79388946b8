use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::descriptive::{mean, sample_sd};
use crate::error::{Error, Result};

const LOA_MULTIPLIER: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean of `est − meas`.
    pub bias: f64,
    pub sd_diff: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
}

pub fn bland_altman(est: &[f64], meas: &[f64]) -> Result<BlandAltman> {
    if est.len() != meas.len() {
        return Err(Error::domain("bland-altman: length mismatch"));
    }
    if est.len() < 2 {
        return Err(Error::InsufficientData(
            "bland-altman needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = est.iter().zip(meas).map(|(e, m)| e - m).collect();
    let bias = mean(&diffs);
    let sd_diff = sample_sd(&diffs);
    Ok(BlandAltman {
        bias,
        sd_diff,
        loa_lower: bias - LOA_MULTIPLIER * sd_diff,
        loa_upper: bias + LOA_MULTIPLIER * sd_diff,
    })
}

/// Two-way random-effects, absolute-agreement, single-measurement ICC for
/// two raters, from ANOVA mean squares.
pub fn icc_2_1(ratings: &[[f64; 2]]) -> Result<f64> {
    let n = ratings.len();
    if n < 3 {
        return Err(Error::InsufficientData(
            "icc needs at least 3 subjects".into(),
        ));
    }
    if ratings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("icc: non-finite rating"));
    }
    let k = 2.0;
    let nf = n as f64;
    let grand = ratings.iter().flatten().sum::<f64>() / (nf * k);
    let col_means = [0, 1].map(|j| ratings.iter().map(|r| r[j]).sum::<f64>() / nf);

    let ss_rows: f64 = ratings
        .iter()
        .map(|r| k * ((r[0] + r[1]) / k - grand).powi(2))
        .sum();
    if ss_rows == 0.0 {
        return Err(Error::degenerate("icc: zero between-subject variance"));
    }
    let ss_cols: f64 = col_means.iter().map(|c| nf * (c - grand).powi(2)).sum();
    let ss_total: f64 = ratings.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (k - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (k - 1.0));
    Ok((ms_rows - ms_err) / (ms_rows + (k - 1.0) * ms_err + k * (ms_cols - ms_err) / nf))
}

/// Cohen's kappa over the union of observed labels. When chance agreement is
/// total and the labelings agree, kappa is 1.
pub fn cohens_kappa<T: Ord>(truth: &[T], pred: &[T]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::domain("kappa: length mismatch"));
    }
    if truth.is_empty() {
        return Err(Error::InsufficientData("kappa of empty labelings".into()));
    }
    let labels: Vec<&T> = truth
        .iter()
        .chain(pred)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx = |l: &T| labels.binary_search(&l).expect("label in alphabet");
    let k = labels.len();
    let mut table = vec![0usize; k * k];
    for (t, p) in truth.iter().zip(pred) {
        table[idx(t) * k + idx(p)] += 1;
    }
    let n = truth.len() as f64;
    let p_o = (0..k).map(|i| table[i * k + i]).sum::<usize>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = (0..k).map(|j| table[i * k + j]).sum();
            let col: usize = (0..k).map(|j| table[j * k + i]).sum();
            row as f64 * col as f64 / (n * n)
        })
        .sum();
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
