use outflow_core::gbt::{
    fit_with_holdout, permutation_importance, random_search, split_80_20, train, Dataset,
    FeatureSchema, GbtHyperparams, Node, ParamRange, SearchSpace, TreeEnsemble,
};
use outflow_core::sampling::SimRng;
use outflow_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn one_feature(xs: &[f64]) -> Dataset {
    Dataset::from_columns(FeatureSchema::numeric(["x"]), vec![xs.to_vec()]).unwrap()
}

fn full_sample(n_estimators: usize, max_depth: usize) -> GbtHyperparams {
    GbtHyperparams {
        n_estimators,
        learning_rate: 0.3,
        max_depth,
        subsample: 1.0,
        colsample_bytree: 1.0,
        gamma: 0.0,
        reg_alpha: 0.0,
        reg_lambda: 1.0,
    }
}

#[test]
fn constant_target_predicts_constant() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let y = vec![2.5; 50];
    for hp in [GbtHyperparams::stage1(), GbtHyperparams::stage2()] {
        let m = train(&one_feature(&xs), &y, &hp, &mut rng(1)).unwrap();
        for x in &xs {
            assert_eq!(m.predict(&[*x]).unwrap(), 2.5);
        }
    }
}

#[test]
fn depth_zero_predicts_mean() {
    let xs: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let mean = y.iter().sum::<f64>() / 20.0;
    let mut hp = full_sample(1, 0);
    hp.reg_lambda = 0.0;
    hp.learning_rate = 1.0;
    let m = train(&one_feature(&xs), &y, &hp, &mut rng(2)).unwrap();
    assert_eq!(m.base_score, mean);
    for x in &xs {
        assert!((m.predict(&[*x]).unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn learns_identity() {
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    let (m, report) =
        fit_with_holdout(&one_feature(&xs), &xs, &GbtHyperparams::stage2(), 7).unwrap();
    assert_eq!((report.n_train, report.n_test), (160, 40));
    assert!(report.r2 >= 0.99, "held-out r2 {}", report.r2);
    assert!((m.predict(&[0.5]).unwrap() - 0.5).abs() < 0.05);
    assert!(m.trees.iter().all(|t| t.depth() <= 3));
}

#[test]
fn batch_matches_rows_and_empty_ensemble() {
    let mut r = rng(3);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![r.random(), r.random(), r.random()])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|v| v[0] * 2.0 - v[1] + (v[2] * 6.0).sin())
        .collect();
    let data = Dataset::from_rows(FeatureSchema::numeric(["a", "b", "c"]), &rows).unwrap();
    let m = train(&data, &y, &GbtHyperparams::stage1(), &mut rng(4)).unwrap();
    let batch = m.predict_batch(&data).unwrap();
    for (row, b) in rows.iter().zip(&batch) {
        assert_eq!(m.predict(row).unwrap(), *b);
    }
    let empty = TreeEnsemble::new(
        1.25,
        GbtHyperparams::stage1(),
        data.schema().clone(),
        Vec::new(),
    );
    assert_eq!(empty.predict(&rows[0]).unwrap(), 1.25);
    assert!(matches!(m.predict(&[1.0]), Err(Error::Schema(_))));
    let other = Dataset::from_rows(FeatureSchema::numeric(["a", "b", "z"]), &rows).unwrap();
    assert!(matches!(m.predict_batch(&other), Err(Error::Schema(_))));
}

#[test]
fn structural_invariants_and_determinism() {
    let mut r = rng(5);
    let rows: Vec<Vec<f64>> = (0..400)
        .map(|_| vec![r.random(), r.random::<f64>() * 10.0])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|v| (v[0] * 3.0).exp() + v[1].sqrt())
        .collect();
    let data = Dataset::from_rows(FeatureSchema::numeric(["a", "b"]), &rows).unwrap();
    let hp = GbtHyperparams::stage1();
    let a = train(&data, &y, &hp, &mut rng(9)).unwrap();
    let b = train(&data, &y, &hp, &mut rng(9)).unwrap();
    let json = a.to_json().unwrap();
    assert_eq!(json, b.to_json().unwrap());
    for t in &a.trees {
        assert!(t.depth() <= hp.max_depth);
        assert!(t.leaf_weights().all(f64::is_finite));
    }
    let back = TreeEnsemble::from_json(&json).unwrap();
    for row in &rows {
        assert_eq!(
            a.predict(row).unwrap().to_bits(),
            back.predict(row).unwrap().to_bits()
        );
    }
    let bumped = json.replacen("\"version\":1", "\"version\":99", 1);
    assert!(matches!(
        TreeEnsemble::from_json(&bumped),
        Err(Error::Artifact(_))
    ));
}

#[test]
fn training_loss_nonincreasing() {
    let mut r = rng(6);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random(), r.random()]).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|v| (v[0] * 7.0).sin() + v[1] * v[1] + r.random::<f64>() * 0.1)
        .collect();
    let data = Dataset::from_rows(FeatureSchema::numeric(["a", "b"]), &rows).unwrap();
    let mut hp = full_sample(60, 3);
    hp.reg_alpha = 0.2;
    hp.gamma = 0.01;
    let model = train(&data, &y, &hp, &mut rng(1)).unwrap();
    let mut prev = f64::INFINITY;
    for t in 0..=model.trees.len() {
        let m = TreeEnsemble::new(
            model.base_score,
            hp,
            data.schema().clone(),
            model.trees[..t].to_vec(),
        );
        let loss: f64 = m
            .predict_batch(&data)
            .unwrap()
            .iter()
            .zip(&y)
            .map(|(p, y)| (p - y).powi(2))
            .sum();
        assert!(loss <= prev + 1e-9, "round {t}: {loss} > {prev}");
        prev = loss;
    }
}

#[test]
fn split_partition() {
    let (tr, te) = split_80_20(10, &mut rng(1)).unwrap();
    assert_eq!((tr.len(), te.len()), (8, 2));
    let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(split_80_20(10, &mut rng(1)).unwrap(), (tr, te));
    assert_eq!(split_80_20(13, &mut rng(2)).unwrap().1.len(), 3);
    assert!(split_80_20(4, &mut rng(1)).is_err());
}

fn toy() -> (Dataset, Vec<f64>) {
    let mut r = rng(8);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| vec![r.random(), r.random(), r.random()])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|v| 3.0 * v[0] + (v[1] * 4.0).cos())
        .collect();
    (
        Dataset::from_rows(FeatureSchema::numeric(["a", "b", "unused"]), &rows).unwrap(),
        y,
    )
}

#[test]
fn search_contracts() {
    let (data, y) = toy();
    let s1 = GbtHyperparams::stage1();
    let fixed = random_search(&data, &y, &SearchSpace::fixed(&s1), 5, 3, &mut rng(1)).unwrap();
    assert_eq!(fixed.best, s1);
    assert_eq!(fixed.best_index, 0);

    let mut space = SearchSpace::broad();
    space.n_estimators = ParamRange::IntUniform { low: 10, high: 40 };
    let one = random_search(&data, &y, &space, 5, 1, &mut rng(2)).unwrap();
    assert_eq!(one.configs.len(), 1);
    assert_eq!(one.best, one.configs[0]);

    let many = random_search(&data, &y, &space, 5, 6, &mut rng(3)).unwrap();
    assert!(many
        .cv_rmse
        .iter()
        .all(|r| many.cv_rmse[many.best_index] <= *r));
    assert!(many
        .configs
        .iter()
        .all(|c| (10..=40).contains(&c.n_estimators)));
}

#[test]
fn unused_feature_has_zero_importance() {
    let (data, y) = toy();
    let mut r = rng(4);
    let model = train(&data, &y, &full_sample(30, 3), &mut r).unwrap();
    let uses = |j: usize| {
        model
            .trees
            .iter()
            .any(|t| t.split_features().any(|f| f == j))
    };
    let imp = permutation_importance(&model, &data, &y, &mut r).unwrap();
    for (j, (name, v)) in imp.iter().enumerate() {
        if !uses(j) {
            assert!(v.abs() < 1e-9, "{name} {v}");
        }
    }
    assert_eq!(imp[0].0, "a");
    assert!(imp[0].1 > imp[1].1);
}

/// Exhaustive search over every feature and midpoint threshold, sums taken
/// directly for each candidate.
fn brute_force_split(rows: &[[f64; 2]], y: &[f64], lambda: f64) -> Option<(usize, f64)> {
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let g: Vec<f64> = y.iter().map(|v| base - v).collect();
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let (gt, ht) = (g.iter().sum::<f64>(), y.len() as f64);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..2 {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let t = if t > w[0] && t <= w[1] { t } else { w[1] };
            let (mut gl, mut hl) = (0.0, 0.0);
            for (r, gi) in rows.iter().zip(&g) {
                if r[f] < t {
                    gl += gi;
                    hl += 1.0;
                }
            }
            let gain = score(gl, hl) + score(gt - gl, ht - hl) - score(gt, ht);
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn root_split_matches_brute_force(
        rows in prop::collection::vec([-100.0f64..100.0, -100.0f64..100.0], 2..=64),
        noise in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let y: Vec<f64> = rows.iter().zip(&noise).map(|(r, e)| r[0] * 0.3 - (r[1] / 20.0).powi(2) + e).collect();
        let data = Dataset::from_rows(
            FeatureSchema::numeric(["a", "b"]),
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        ).unwrap();
        let m = train(&data, &y, &full_sample(1, 1), &mut rng(0)).unwrap();
        let got = match m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        };
        prop_assert_eq!(got, brute_force_split(&rows, &y, 1.0));
    }
}
