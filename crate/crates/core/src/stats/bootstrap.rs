use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::descriptive::quantile_sorted;
use crate::error::{Error, Result};
use crate::sampling::SimRng;

/// Percentile 95% bootstrap interval of `statistic` over `n_resamples`
/// resamples with replacement. Each resample has its own generator seeded
/// from `rng`, so the result does not depend on the thread count. Resamples
/// where the statistic is not finite are skipped.
pub fn bootstrap_ci<T, F>(
    data: &[T],
    statistic: F,
    n_resamples: usize,
    rng: &mut SimRng,
) -> Result<(f64, f64)>
where
    T: Clone + Sync + Send,
    F: Fn(&[T]) -> f64 + Sync,
{
    if data.len() < 2 {
        return Err(Error::InsufficientData(
            "bootstrap needs at least 2 observations".into(),
        ));
    }
    if n_resamples == 0 {
        return Err(Error::domain("bootstrap: zero resamples"));
    }
    let seeds: Vec<u64> = (0..n_resamples).map(|_| rng.random()).collect();
    let n = data.len();
    let mut stats: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let mut r = SimRng::seed_from_u64(s);
            let sample: Vec<T> = (0..n).map(|_| data[r.random_range(0..n)].clone()).collect();
            statistic(&sample)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|v| v.is_finite())
        .collect();
    if stats.is_empty() {
        return Err(Error::degenerate(
            "bootstrap: statistic undefined on every resample",
        ));
    }
    stats.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&stats, 0.025),
        quantile_sorted(&stats, 0.975),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_data() {
        let mut rng = SimRng::seed_from_u64(1);
        let (lo, hi) = bootstrap_ci(&[4.2; 10], mean, 1000, &mut rng).unwrap();
        assert!((lo - 4.2).abs() < 1e-12 && (hi - 4.2).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_contains_estimate() {
        let data: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let a = bootstrap_ci(&data, mean, 500, &mut SimRng::seed_from_u64(5)).unwrap();
        let b = bootstrap_ci(&data, mean, 500, &mut SimRng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let m = mean(&data);
        assert!(a.0 <= m && m <= a.1);
    }

    #[test]
    fn coverage_of_normal_mean() {
        let mut rng = SimRng::seed_from_u64(2024);
        let mut covered = 0;
        for _ in 0..200 {
            let data: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (lo, hi) = bootstrap_ci(&data, mean, 1000, &mut rng).unwrap();
            if lo <= 0.0 && 0.0 <= hi {
                covered += 1;
            }
        }
        assert!((180..=198).contains(&covered), "covered {covered}/200");
    }
}
