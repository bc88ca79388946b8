//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are run and reported like the
//! others, but a failure there does not fail the target.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use outflow_core::artifact::{sha256_hex, Envelope};
use outflow_core::cohorts::load_cohorts;
use outflow_core::config::PipelineConfig;
use outflow_core::gbt::{split_80_20, train, GbtHyperparams, TreeEnsemble};
use outflow_core::inference::{Parameter, Scenario};
use outflow_core::pcds::{
    fit_bias, generate_stage1, stage1_dataset, write_stage1_csv, write_stage2_csv,
    CalibrationConfig, NoiseModel, Physiology, Stage1Config,
};
use outflow_core::physics::{
    bias, facility_from_permeability, kozeny_carman_permeability, permeability_from_facility,
    pore_diameter, stage1_analytic_oracle, BiasLine,
};
use outflow_core::pipeline::{self, TrainedPipeline};
use outflow_core::risk::assign_ground_truth;
use outflow_core::sampling::{stream_rng, SimRng};
use outflow_core::stats::{
    cohens_kappa, icc_2_1, kruskal_wallis, mann_whitney_u, sample_sd, spearman_rho,
    wilcoxon_signed_rank,
};
use outflow_core::units::{GeometryFactor, HydrodynamicState, Permeability, Viscosity};
use rand::{Rng, SeedableRng};

const KNOWN_UNATTAINABLE: &[u32] = &[10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn held_out(
    rows_cfg: &Stage1Config,
    seed: u64,
) -> (
    Vec<f64>,
    Vec<f64>,
    Vec<usize>,
    Vec<outflow_core::pcds::Stage1Row>,
    Duration,
) {
    let phys = Physiology::default();
    let rows = generate_stage1(rows_cfg, &phys, seed).unwrap();
    let (data, y) = stage1_dataset(&rows).unwrap();
    let (tr, te) = split_80_20(rows.len(), &mut stream_rng(seed, "acceptance-split", 0)).unwrap();
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let t = Instant::now();
    let model: TreeEnsemble = train(
        &data.subset(&tr),
        &pick(&tr),
        &GbtHyperparams::stage1(),
        &mut SimRng::seed_from_u64(seed),
    )
    .unwrap();
    let elapsed = t.elapsed();
    let test = data.subset(&te);
    let pred = model.predict_batch(&test).unwrap();
    (pred, pick(&te), te, rows, elapsed)
}

fn r2_rmse(pred: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let sse: f64 = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum();
    let sst: f64 = y.iter().map(|t| (t - m).powi(2)).sum();
    (1.0 - sse / sst, (sse / n).sqrt())
}

fn c1() -> Outcome {
    let cfg = Stage1Config {
        noise: NoiseModel::None,
        ..Default::default()
    };
    let phys = Physiology::default();
    let (pred, _, te, rows, elapsed) = held_out(&cfg, 123);
    // ground truth from the analytic inverse, not the stored target
    let oracle: Vec<f64> = te
        .iter()
        .map(|&i| {
            let r = &rows[i];
            let state = HydrodynamicState {
                iop: phys.emulator_line.uncalibrate(r.iop),
                q_ah: r.q_ah,
                f_u: r.f_u,
                evp: r.evp,
                age_years: 50.0,
            };
            stage1_analytic_oracle(&state, phys.geometry.factor(r.age_group), phys.mu)
                .unwrap()
                .log10()
        })
        .collect();
    let (r2, rmse) = r2_rmse(&pred, &oracle);
    outcome(
        r2 >= 0.95 && rmse <= 0.15 && elapsed < Duration::from_secs(300),
        format!("noise-free held-out R² {r2:.4} (≥ 0.95), RMSE {rmse:.4} (≤ 0.15), training {elapsed:.1?} (< 5 min)"),
    )
}

fn c2() -> Outcome {
    let (pred, y, _, _, _) = held_out(&Stage1Config::default(), 123);
    let (r2, _) = r2_rmse(&pred, &y);
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let third = idx.len() / 3;
    let resid_sd =
        |part: &[usize]| sample_sd(&part.iter().map(|&i| pred[i] - y[i]).collect::<Vec<_>>());
    let (low, high) = (resid_sd(&idx[..third]), resid_sd(&idx[idx.len() - third..]));
    outcome(
        (0.6..=0.95).contains(&r2) && high > low,
        format!("noisy held-out R² {r2:.4} in [0.6, 0.95]; residual sd lowest K tercile {low:.4} < highest {high:.4}"),
    )
}

fn c3() -> Outcome {
    let (mut within, mut p_ok, mut agree) = (0, 0, 0);
    let mut worst_p: f64 = 0.0;
    for seed in 0..100 {
        let f = fit_bias(
            &CalibrationConfig::default(),
            &Stage1Config::default(),
            &Physiology::default(),
            seed,
        )
        .unwrap();
        if (f.ols.slope + 0.233).abs() <= 0.06 && (f.ols.intercept - 2.654).abs() <= 0.8 {
            within += 1;
        }
        if f.p_value_slope < 1e-6 {
            p_ok += 1;
        }
        worst_p = worst_p.max(f.p_value_slope);
        if f.lines_agree(2.0) {
            agree += 1;
        }
    }
    outcome(
        within >= 95 && p_ok == 100 && agree == 100,
        format!("{within}/100 within tolerance (≥ 95); slope p < 1e-6 in {p_ok}/100 (max {worst_p:.1e}); OLS and Deming within 2 SE in {agree}/100"),
    )
}

fn c4(cfg: &PipelineConfig, tp: &TrainedPipeline, build: Duration) -> Outcome {
    let t = Instant::now();
    let rep = pipeline::validate_synthetic(cfg, &tp.models().unwrap()).unwrap();
    let total = build + t.elapsed();
    let a = &rep.agreement;
    let bias = a.bland_altman.bias;
    outcome(
        bias.abs() <= 0.02 && a.spearman.statistic >= 0.90 && a.icc >= 0.80 && total < Duration::from_secs(600),
        format!(
            "n = {}: |bias| {:.4} (≤ 0.02), rho {:.4} (≥ 0.90), ICC {:.4} (≥ 0.80), run {total:.1?} (< 10 min)",
            a.n,
            bias.abs(),
            a.spearman.statistic,
            a.icc
        ),
    )
}

fn ranks_of(xs: &[f64]) -> Vec<f64> {
    // average ranks by counting, independent of the library ranking
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|v| *v < x).count() as f64;
            let equal = xs.iter().filter(|v| *v == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn wilcoxon_enumerated(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let r2: Vec<i64> = ranks_of(&nz.iter().map(|v| v.abs()).collect::<Vec<_>>())
        .iter()
        .map(|r| (2.0 * r) as i64)
        .collect();
    let total: i64 = r2.iter().sum();
    let obs: i64 = nz
        .iter()
        .zip(&r2)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let far = (2 * obs - total).abs();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let t: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r2[i]).sum();
        if (2 * t - total).abs() >= far {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

fn mwu_enumerated(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let r2: Vec<i64> = ranks_of(&pooled).iter().map(|r| (2.0 * r) as i64).collect();
    let (m, obs): (usize, i64) = if a.len() <= b.len() {
        (a.len(), r2[..a.len()].iter().sum())
    } else {
        (b.len(), r2[a.len()..].iter().sum())
    };
    let centre = (m * (n + 1)) as i64;
    let far = (obs - centre).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        total += 1;
        let s: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r2[i]).sum();
        if (s - centre).abs() >= far {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn c5() -> Outcome {
    let mut rng = SimRng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut fixtures = 0;
    while fixtures < 200 {
        let n = rng.random_range(1..=8);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-4..=4) as f64).collect();
        let na = rng.random_range(1..=4);
        let nb = rng.random_range(1..=(8 - na));
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..6) as f64).collect();
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        fixtures += 1;
        if wilcoxon_signed_rank(&d).unwrap().p_value != wilcoxon_enumerated(&d) {
            mismatches += 1;
        }
        if mann_whitney_u(&a, &b).unwrap().p_value != mwu_enumerated(&a, &b) {
            mismatches += 1;
        }
    }

    let mut worst: f64 = 0.0;
    // Spearman without ties: 1 − 6Σd²/(n(n²−1))
    let (x, y) = ([1.0, 2.0, 3.0, 4.0, 5.0], [2.0, 1.0, 4.0, 3.0, 5.0]);
    let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
    worst = worst
        .max((spearman_rho(&x, &y).unwrap().statistic - (1.0 - 6.0 * d2 / (5.0 * 24.0))).abs());
    // Kruskal-Wallis without ties: 12/(N(N+1)) Σ R²/n − 3(N+1)
    let groups: [&[f64]; 3] = [&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]];
    let h =
        12.0 / 42.0 * (3.0f64.powi(2) / 2.0 + 7.0f64.powi(2) / 2.0 + 11.0f64.powi(2) / 2.0) - 21.0;
    worst = worst.max((kruskal_wallis(&groups).unwrap().statistic - h).abs());
    // kappa from a 3-class confusion [[4,1,0],[1,3,1],[0,1,4]]
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (i, row) in [[4, 1, 0], [1, 3, 1], [0, 1, 4]].iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            for _ in 0..*c {
                t.push(i);
                p.push(j);
            }
        }
    }
    let po = 11.0 / 15.0;
    let pe = (5.0 * 5.0 + 5.0 * 5.0 + 5.0 * 5.0) / 225.0;
    worst = worst.max((cohens_kappa(&t, &p).unwrap() - (po - pe) / (1.0 - pe)).abs());
    // ICC(2,1) from residual mean squares
    let r = [[9.0, 10.0], [6.0, 8.0], [8.0, 8.0], [7.0, 9.0]];
    let n = 4.0;
    let grand: f64 = r.iter().flatten().sum::<f64>() / 8.0;
    let rm: Vec<f64> = r.iter().map(|v| (v[0] + v[1]) / 2.0).collect();
    let cm = [0, 1].map(|j| r.iter().map(|v| v[j]).sum::<f64>() / n);
    let bms = 2.0 * rm.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let jms = n * cm.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ems = (0..4)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (r[i][j] - rm[i] - cm[j] + grand).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let icc = (bms - ems) / (bms + ems + 2.0 * (jms - ems) / n);
    worst = worst.max((icc_2_1(&r).unwrap() - icc).abs());

    outcome(
        mismatches == 0 && worst <= 1e-12,
        format!("{fixtures} random exact-test fixtures (n ≤ 8), {mismatches} mismatches; formula oracles max |Δ| {worst:.1e} (≤ 1e-12)"),
    )
}

fn c6() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/validation_cohorts.csv");
    let cohorts = load_cohorts(&path).unwrap();
    let hits = cohorts
        .iter()
        .filter(|c| assign_ground_truth(c).ok() == c.label)
        .count();
    outcome(
        cohorts.len() == 27 && hits == 27,
        format!("{hits}/{} cohort labels reproduced", cohorts.len()),
    )
}

fn c7(cfg: &PipelineConfig, tp: &TrainedPipeline) -> Outcome {
    let r = pipeline::risk_thresholds(cfg, &tp.models().unwrap()).unwrap();
    let t = r.thresholds;
    outcome(
        t.compromised_ceiling.0 < t.normal_floor.0 && r.score.kappa == 1.0 && r.kruskal_wallis.p_value < 1e-6,
        format!(
            "ceiling {:.3e} < floor {:.3e}; kappa {:.3} over {} fresh cohorts; Kruskal-Wallis p {:.1e} (< 1e-6)",
            t.compromised_ceiling.0,
            t.normal_floor.0,
            r.score.kappa,
            r.cohorts.len(),
            r.kruskal_wallis.p_value
        ),
    )
}

fn artifact_hashes(cfg: &PipelineConfig, tp: &TrainedPipeline) -> Vec<String> {
    let prov = cfg.provenance().unwrap();
    let mut s1 = Vec::new();
    write_stage1_csv(&mut s1, &tp.stage1_rows, Some(&prov)).unwrap();
    let mut s2 = Vec::new();
    write_stage2_csv(&mut s2, &tp.stage2_data.rows, Some(&prov)).unwrap();
    let models = tp.models().unwrap();
    let patient = cfg.sensitivity.default_patient;
    let profile = outflow_core::inference::profile_patient(
        &patient,
        &models,
        &cfg.physiology.priors,
        &cfg.inference().unwrap(),
        1,
    )
    .unwrap();
    let validation = pipeline::validate_synthetic(cfg, &models).unwrap();
    let sens = pipeline::run_sensitivity(cfg, &models, &[patient]).unwrap();
    let env = |data: serde_json::Value| Envelope::new("x", prov.clone(), data).to_json().unwrap();
    [
        s1,
        s2,
        env(serde_json::to_value(tp.calibration).unwrap()).into_bytes(),
        tp.stage1.model.to_json().unwrap().into_bytes(),
        tp.stage2.model.to_json().unwrap().into_bytes(),
        env(serde_json::to_value(&tp.reference).unwrap()).into_bytes(),
        profile.to_json().unwrap().into_bytes(),
        env(serde_json::to_value(&validation).unwrap()).into_bytes(),
        env(serde_json::to_value(&sens).unwrap()).into_bytes(),
    ]
    .iter()
    .map(|b| sha256_hex(b))
    .collect()
}

fn c8(cfg: &PipelineConfig, tp: &TrainedPipeline) -> Outcome {
    let first = artifact_hashes(cfg, tp);
    let again = pipeline::build_models(cfg).unwrap();
    let second = artifact_hashes(cfg, &again);
    let same = first.iter().zip(&second).filter(|(a, b)| a == b).count();
    outcome(
        same == first.len(),
        format!(
            "{same}/{} artifact hashes identical across two full runs",
            first.len()
        ),
    )
}

fn c9() -> Outcome {
    let mut rng = SimRng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let k = Permeability(10f64.powf(rng.random_range(-18.0..-12.0)));
        let g = GeometryFactor(rng.random_range(0.01..1.0));
        let mu = Viscosity(rng.random_range(5e-4..1e-3));
        let c = facility_from_permeability(k, g, mu).unwrap();
        let back = permeability_from_facility(c, g, mu).unwrap();
        worst = worst.max((back.0 / k.0 - 1.0).abs());
        let eps = rng.random_range(0.05..0.6);
        let kk = rng.random_range(50.0..300.0);
        let d = pore_diameter(k, eps, kk).unwrap();
        let back = kozeny_carman_permeability(d, eps, kk).unwrap();
        worst = worst.max((back.0 / k.0 - 1.0).abs());
    }
    let line = BiasLine::default();
    let root = line.root().unwrap();
    let at_root = bias(root, &line).abs();
    outcome(
        worst <= 1e-12 && (root - 11.391).abs() < 5e-4 && at_root < 1e-9,
        format!("max relative round-trip error {worst:.1e} over 10⁴ tuples; fixed point {root:.6} mmHg, |bias| there {at_root:.1e}"),
    )
}

fn c10(cfg: &PipelineConfig, tp: &TrainedPipeline) -> Outcome {
    let patients = pipeline::sensitivity_patients(cfg).unwrap();
    let reps = pipeline::run_sensitivity(cfg, &tp.models().unwrap(), &patients).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reps {
        let e = |s| r.entry(s, Parameter::KTm).unwrap();
        let narrow = e(Scenario::Narrow).cv_change_pct;
        let wide = e(Scenario::Wide).cv_change_pct;
        let hi = e(Scenario::HighInflow).median_change_pct;
        let lo = e(Scenario::LowInflow).median_change_pct;
        pass &= narrow < 0.0 && wide > 0.0 && hi.abs() < 25.0 && lo.abs() < 25.0;
        parts.push(format!(
            "CV Narrow {narrow:+.1}% Wide {wide:+.1}%, median ±Q {hi:+.1}%/{lo:+.1}%"
        ));
    }
    outcome(
        pass,
        format!("K_TM on {} patients: {}", reps.len(), parts.join("; ")),
    )
}

fn main() {
    let cfg = PipelineConfig::default();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut record = |id: u32, o: Outcome| {
        println!(
            "C{id} {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, o));
    };
    record(1, c1());
    record(2, c2());
    record(3, c3());
    let t = Instant::now();
    let tp = pipeline::build_models(&cfg).unwrap();
    let build = t.elapsed();
    record(4, c4(&cfg, &tp, build));
    record(5, c5());
    record(6, c6());
    record(7, c7(&cfg, &tp));
    record(8, c8(&cfg, &tp));
    record(9, c9());
    record(10, c10(&cfg, &tp));

    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, o)| !o.pass && !KNOWN_UNATTAINABLE.contains(id))
        .map(|(id, _)| *id)
        .collect();
    let known: Vec<u32> = results
        .iter()
        .filter(|(id, o)| !o.pass && KNOWN_UNATTAINABLE.contains(id))
        .map(|(id, _)| *id)
        .collect();
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!(
        "acceptance: {passed}/{} PASS; known unattainable failing: {known:?}",
        results.len()
    );
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
