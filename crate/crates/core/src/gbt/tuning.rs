use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{train, Dataset, GbtHyperparams, TreeEnsemble};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, SimRng};

/// Shuffles per feature in [`permutation_importance`].
pub const IMPORTANCE_REPEATS: usize = 10;

/// Held-out performance of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2: f64,
    pub rmse: f64,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub hyperparams: GbtHyperparams,
}

fn rmse_r2(pred: &[f64], target: &[f64]) -> (f64, f64) {
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let sse: f64 = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum();
    let sst: f64 = target.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    ((sse / n).sqrt(), r2)
}

/// Returns `(r2, rmse)` of the model on the given rows.
pub fn evaluate(model: &TreeEnsemble, data: &Dataset, target: &[f64]) -> Result<(f64, f64)> {
    if target.len() != data.n_rows() || target.is_empty() {
        return Err(Error::Schema("target length does not match rows".into()));
    }
    let pred = model.predict_batch(data)?;
    let (rmse, r2) = rmse_r2(&pred, target);
    Ok((r2, rmse))
}

/// Shuffled partition into training and test indices with
/// `|test| = round(0.2·n)`.
pub fn split_80_20(n: usize, rng: &mut SimRng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "80/20 split needs at least 5 rows, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_test = (0.2 * n as f64).round() as usize;
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    Ok((train, test))
}

/// Splits with a stream derived from `seed`, trains on 80% and scores the
/// held-out 20%.
pub fn fit_with_holdout(
    data: &Dataset,
    target: &[f64],
    hp: &GbtHyperparams,
    seed: u64,
) -> Result<(TreeEnsemble, FitReport)> {
    if target.len() != data.n_rows() {
        return Err(Error::Schema("target length does not match rows".into()));
    }
    let mut split_rng = SimRng::seed_from_u64(derive_seed(seed, "gbt-split", 0));
    let (tr, te) = split_80_20(data.n_rows(), &mut split_rng)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| target[i]).collect::<Vec<_>>();
    let mut train_rng = SimRng::seed_from_u64(derive_seed(seed, "gbt-train", 0));
    let model = train(&data.subset(&tr), &pick(&tr), hp, &mut train_rng)?;
    let (r2, rmse) = evaluate(&model, &data.subset(&te), &pick(&te))?;
    let report = FitReport {
        r2,
        rmse,
        split_seed: seed,
        n_train: tr.len(),
        n_test: te.len(),
        hyperparams: *hp,
    };
    Ok((model, report))
}

/// Sampling distribution of one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamRange {
    Fixed {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    LogUniform {
        low: f64,
        high: f64,
    },
    /// Inclusive integer range.
    IntUniform {
        low: i64,
        high: i64,
    },
}

impl ParamRange {
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            ParamRange::Fixed { value } => value,
            ParamRange::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ParamRange::LogUniform { low, high } => {
                (low.ln() + (high.ln() - low.ln()) * rng.random::<f64>()).exp()
            }
            ParamRange::IntUniform { low, high } => rng.random_range(low..=high) as f64,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            ParamRange::Fixed { value } => value.is_finite(),
            ParamRange::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ParamRange::LogUniform { low, high } => low > 0.0 && high.is_finite() && low <= high,
            ParamRange::IntUniform { low, high } => low <= high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid search range for {name}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_estimators: ParamRange,
    pub learning_rate: ParamRange,
    pub max_depth: ParamRange,
    pub subsample: ParamRange,
    pub colsample_bytree: ParamRange,
    pub gamma: ParamRange,
    pub reg_alpha: ParamRange,
    pub reg_lambda: ParamRange,
}

impl SearchSpace {
    /// A space holding exactly one configuration.
    pub fn fixed(hp: &GbtHyperparams) -> Self {
        let f = |value: f64| ParamRange::Fixed { value };
        Self {
            n_estimators: f(hp.n_estimators as f64),
            learning_rate: f(hp.learning_rate),
            max_depth: f(hp.max_depth as f64),
            subsample: f(hp.subsample),
            colsample_bytree: f(hp.colsample_bytree),
            gamma: f(hp.gamma),
            reg_alpha: f(hp.reg_alpha),
            reg_lambda: f(hp.reg_lambda),
        }
    }

    /// Broad default space for exploratory searches.
    pub fn broad() -> Self {
        Self {
            n_estimators: ParamRange::IntUniform {
                low: 100,
                high: 500,
            },
            learning_rate: ParamRange::LogUniform {
                low: 0.01,
                high: 0.3,
            },
            max_depth: ParamRange::IntUniform { low: 2, high: 12 },
            subsample: ParamRange::Uniform {
                low: 0.5,
                high: 1.0,
            },
            colsample_bytree: ParamRange::Uniform {
                low: 0.4,
                high: 1.0,
            },
            gamma: ParamRange::Uniform {
                low: 0.0,
                high: 0.5,
            },
            reg_alpha: ParamRange::Uniform {
                low: 0.0,
                high: 1.0,
            },
            reg_lambda: ParamRange::Uniform {
                low: 0.0,
                high: 2.0,
            },
        }
    }

    fn sample(&self, rng: &mut SimRng) -> Result<GbtHyperparams> {
        let hp = GbtHyperparams {
            n_estimators: self.n_estimators.sample(rng).round().max(0.0) as usize,
            learning_rate: self.learning_rate.sample(rng),
            max_depth: self.max_depth.sample(rng).round().max(0.0) as usize,
            subsample: self.subsample.sample(rng),
            colsample_bytree: self.colsample_bytree.sample(rng),
            gamma: self.gamma.sample(rng),
            reg_alpha: self.reg_alpha.sample(rng),
            reg_lambda: self.reg_lambda.sample(rng),
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("n_estimators", &self.n_estimators),
            ("learning_rate", &self.learning_rate),
            ("max_depth", &self.max_depth),
            ("subsample", &self.subsample),
            ("colsample_bytree", &self.colsample_bytree),
            ("gamma", &self.gamma),
            ("reg_alpha", &self.reg_alpha),
            ("reg_lambda", &self.reg_lambda),
        ] {
            r.validate(name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: GbtHyperparams,
    pub best_index: usize,
    /// Every sampled configuration in draw order.
    pub configs: Vec<GbtHyperparams>,
    /// Mean validation RMSE over folds, aligned with `configs`.
    pub cv_rmse: Vec<f64>,
}

/// Randomized search with k-fold cross-validation. All configurations share
/// one fold assignment; the lowest mean fold RMSE wins, earlier draws winning
/// ties.
pub fn random_search(
    data: &Dataset,
    target: &[f64],
    space: &SearchSpace,
    k_folds: usize,
    n_iter: usize,
    rng: &mut SimRng,
) -> Result<SearchOutcome> {
    space.validate()?;
    let n = data.n_rows();
    if n_iter == 0 {
        return Err(Error::Config("random search needs n_iter ≥ 1".into()));
    }
    if k_folds < 2 || n < 2 * k_folds {
        return Err(Error::InsufficientData(format!(
            "{k_folds}-fold CV on {n} rows"
        )));
    }
    if target.len() != n {
        return Err(Error::Schema("target length does not match rows".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let folds: Vec<&[usize]> = (0..k_folds)
        .map(|f| &order[f * n / k_folds..(f + 1) * n / k_folds])
        .collect();
    let configs = (0..n_iter)
        .map(|_| space.sample(rng))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..n_iter * k_folds).map(|_| rng.random()).collect();

    let mut cv_rmse = Vec::with_capacity(n_iter);
    for (c, hp) in configs.iter().enumerate() {
        let mut total = 0.0;
        for (f, held) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let y_tr: Vec<f64> = train_idx.iter().map(|&i| target[i]).collect();
            let y_va: Vec<f64> = held.iter().map(|&i| target[i]).collect();
            let mut fold_rng = SimRng::seed_from_u64(seeds[c * k_folds + f]);
            let model = train(&data.subset(&train_idx), &y_tr, hp, &mut fold_rng)?;
            total += evaluate(&model, &data.subset(held), &y_va)?.1;
        }
        cv_rmse.push(total / k_folds as f64);
    }
    let mut best_index = 0;
    for (i, r) in cv_rmse.iter().enumerate() {
        if *r < cv_rmse[best_index] {
            best_index = i;
        }
    }
    Ok(SearchOutcome {
        best: configs[best_index],
        best_index,
        configs,
        cv_rmse,
    })
}

/// Mean RMSE increase when each feature column is permuted, using the same
/// [`IMPORTANCE_REPEATS`] permutations for every feature. Returned in schema
/// order.
pub fn permutation_importance(
    model: &TreeEnsemble,
    data: &Dataset,
    target: &[f64],
    rng: &mut SimRng,
) -> Result<Vec<(String, f64)>> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::InsufficientData("importance on empty data".into()));
    }
    let (_, base) = evaluate(model, data, target)?;
    let perms: Vec<Vec<usize>> = (0..IMPORTANCE_REPEATS)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    let mut out = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let col = data.column(j);
        let mut total = 0.0;
        for p in &perms {
            let shuffled = data.with_column(j, p.iter().map(|&i| col[i]).collect());
            total += evaluate(model, &shuffled, target)?.1 - base;
        }
        out.push((
            data.schema().names[j].clone(),
            total / IMPORTANCE_REPEATS as f64,
        ));
    }
    Ok(out)
}
