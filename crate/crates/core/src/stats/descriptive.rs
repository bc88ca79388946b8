use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type 7 quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("quantile of empty data".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("quantile of data containing NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, q))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank (i+1 + j)/2
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Sizes of tie groups, for tie corrections.
pub(crate) fn tie_sizes(xs: &[f64]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        out.push(j - i);
        i = j;
    }
    out
}

/// Location, spread and quantile summary of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    /// sd / mean on the linear scale.
    pub cv: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Result<Summary> {
        if xs.is_empty() {
            return Err(Error::InsufficientData("summary of empty data".into()));
        }
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let m = mean(xs);
        let sd = if xs.len() > 1 { sample_sd(xs) } else { 0.0 };
        Ok(Summary {
            mean: m,
            sd,
            cv: if m != 0.0 { sd / m.abs() } else { f64::NAN },
            q05: quantile_sorted(&v, 0.05),
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
            q95: quantile_sorted(&v, 0.95),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0]),
            vec![2.0, 3.5, 3.5, 1.0]
        );
        assert_eq!(tie_sizes(&[1.0, 2.0, 2.0, 2.0, 3.0]), vec![1, 3, 1]);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn summary_cv() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(s.cv, 0.5);
    }

    proptest! {
        #[test]
        fn odd_median_is_middle_element(mut v in prop::collection::vec(-1e6f64..1e6, 1..50usize)) {
            if v.len() % 2 == 0 { v.pop(); }
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(quantile(&v, 0.5).unwrap(), s[s.len() / 2]);
        }
    }
}
