use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use super::descriptive::{average_ranks, mean, tie_sizes};
use super::{TestMethod, TestResult};
use crate::error::{Error, Result};

/// Largest number of nonzero differences for the exact signed-rank test.
pub const EXACT_WILCOXON_MAX_N: usize = 20;
/// Largest smaller-group size for the exact rank-sum test.
pub const EXACT_MWU_MAX_MIN_GROUP: usize = 10;

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * standard_normal().sf(z.abs())
}

fn tie_term(xs: &[f64]) -> f64 {
    tie_sizes(xs)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; p from the t approximation with n − 2 df.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::domain("spearman: length mismatch"));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(
            "spearman needs at least 3 pairs".into(),
        ));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::degenerate("spearman: constant input, correlation undefined"))?;
    let df = (x.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
        2.0 * dist.sf(t.abs())
    };
    Ok(TestResult::new(rho, p, TestMethod::TApprox))
}

/// Number of subsets of `weights` with each total, indexed by total.
fn subset_sum_counts(weights: &[usize]) -> Vec<u64> {
    let total: usize = weights.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &w in weights {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + w] += counts[s];
            }
        }
        reach += w;
    }
    counts
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped. With at most [`EXACT_WILCOXON_MAX_N`]
/// remaining the p-value is the exact share of the 2ⁿ sign assignments whose
/// positive-rank sum is at least as far from its mean as the observed one;
/// beyond that the tie-corrected normal approximation is used. The reported
/// statistic is `min(W+, W−)`.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::domain("wilcoxon: non-finite difference"));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::degenerate("wilcoxon: all differences are zero"));
    }
    let n = nz.len();
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let stat = w_plus.min(total - w_plus);

    if n <= EXACT_WILCOXON_MAX_N {
        // Doubled ranks are integers even with ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let sum2: i64 = doubled.iter().sum::<usize>() as i64;
        let obs2 = (2.0 * w_plus).round() as i64;
        let far = (2 * obs2 - sum2).abs();
        let counts = subset_sum_counts(&doubled);
        let hits: u64 = counts
            .iter()
            .enumerate()
            .filter(|(t, _)| (2 * *t as i64 - sum2).abs() >= far)
            .map(|(_, c)| *c)
            .sum();
        let p = hits as f64 / (1u64 << n) as f64;
        return Ok(TestResult::new(stat, p, TestMethod::Exact));
    }

    let nf = n as f64;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
    if var <= 0.0 {
        return Err(Error::degenerate("wilcoxon: zero variance"));
    }
    let z = (w_plus - nf * (nf + 1.0) / 4.0) / var.sqrt();
    Ok(TestResult::new(
        stat,
        two_sided_normal_p(z),
        TestMethod::NormalApprox,
    ))
}

/// Kruskal-Wallis H with tie correction; p from chi-square with k − 1 df.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(
            "kruskal-wallis needs at least 2 groups".into(),
        ));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InsufficientData(
            "kruskal-wallis: empty group".into(),
        ));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("kruskal-wallis: non-finite value"));
    }
    let n = pooled.len() as f64;
    let correction = 1.0 - tie_term(&pooled) / (n * n * n - n);
    if correction <= 0.0 {
        return Err(Error::degenerate("kruskal-wallis: all values identical"));
    }
    let ranks = average_ranks(&pooled);
    let mut offset = 0;
    let mut sum_sq = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum_sq += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = (12.0 / (n * (n + 1.0)) * sum_sq - 3.0 * (n + 1.0)) / correction;
    let h = h.max(0.0);
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("positive df").sf(h);
    Ok(TestResult::new(h, p, TestMethod::ChiSquare))
}

/// Counts of size-`m` subsets of `weights` by total weight.
fn fixed_size_subset_counts(weights: &[usize], m: usize) -> Vec<u128> {
    let mut sorted = weights.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let max_total: usize = sorted.iter().take(m).sum();
    let width = max_total + 1;
    // counts[k * width + s]
    let mut counts = vec![0u128; (m + 1) * width];
    counts[0] = 1;
    for (i, &w) in weights.iter().enumerate() {
        for k in (1..=m.min(i + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k * width);
            let prev = &lower[(k - 1) * width..];
            let cur = &mut upper[..width];
            for s in (w..width).rev() {
                let c = prev[s - w];
                if c != 0 {
                    cur[s] += c;
                }
            }
        }
    }
    counts[m * width..].to_vec()
}

/// Two-sided Mann-Whitney U test.
///
/// Exact when the smaller group has at most [`EXACT_MWU_MAX_MIN_GROUP`]
/// members (all equally likely rank assignments, ties kept at their average
/// ranks); otherwise the tie-corrected normal approximation with continuity
/// correction. The statistic is `min(U1, U2)`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("mann-whitney: empty group".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("mann-whitney: non-finite value"));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let stat = u1.min(u2);

    if n1.min(n2) <= EXACT_MWU_MAX_MIN_GROUP {
        let (m, obs_ranks) = if n1 <= n2 {
            (n1, &ranks[..n1])
        } else {
            (n2, &ranks[n1..])
        };
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let obs2: i64 = obs_ranks.iter().map(|r| (2.0 * r).round() as i64).sum();
        let centre = (m * (n + 1)) as i64;
        let far = (obs2 - centre).abs();
        let counts = fixed_size_subset_counts(&doubled, m);
        let mut hits: u128 = 0;
        let mut total: u128 = 0;
        for (s, &c) in counts.iter().enumerate() {
            total += c;
            if (s as i64 - centre).abs() >= far {
                hits += c;
            }
        }
        let p = hits as f64 / total as f64;
        return Ok(TestResult::new(stat, p, TestMethod::Exact));
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    if var <= 0.0 {
        // Every value tied: no evidence of a shift.
        return Ok(TestResult::new(stat, 1.0, TestMethod::NormalApprox));
    }
    let z = ((u1 - n1f * n2f / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestResult::new(
        stat,
        two_sided_normal_p(z),
        TestMethod::NormalApprox,
    ))
}

/// One pairwise comparison from [`mann_whitney_bonferroni`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairwiseTest {
    pub group_a: usize,
    pub group_b: usize,
    /// p-value multiplied by the number of pairs and capped at 1.
    pub test: TestResult,
    pub raw_p_value: f64,
}

/// All pairwise Mann-Whitney tests with Bonferroni-adjusted p-values, in
/// `(0,1), (0,2), …, (1,2), …` order.
pub fn mann_whitney_bonferroni(groups: &[&[f64]]) -> Result<Vec<PairwiseTest>> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(
            "pairwise tests need at least 2 groups".into(),
        ));
    }
    let pairs = groups.len() * (groups.len() - 1) / 2;
    let mut out = Vec::with_capacity(pairs);
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let t = mann_whitney_u(groups[i], groups[j])?;
            out.push(PairwiseTest {
                group_a: i,
                group_b: j,
                test: TestResult::new(t.statistic, t.p_value * pairs as f64, t.method),
                raw_p_value: t.p_value,
            });
        }
    }
    Ok(out)
}
