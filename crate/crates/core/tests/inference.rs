use std::collections::BTreeMap;
use std::sync::OnceLock;

use outflow_core::gbt::{train, GbtHyperparams};
use outflow_core::inference::*;
use outflow_core::pcds::*;
use outflow_core::physics::pore_diameter;
use outflow_core::sampling::{PriorSet, SimRng};
use outflow_core::units::{Permeability, Pressure};
use outflow_core::Error;
use rand::SeedableRng;

struct Fixture {
    models: TwoStageModels,
    stage2: Stage2Dataset,
}

fn hp(depth: usize) -> GbtHyperparams {
    GbtHyperparams {
        n_estimators: 40,
        learning_rate: 0.3,
        max_depth: depth,
        subsample: 1.0,
        colsample_bytree: 1.0,
        gamma: 0.0,
        reg_alpha: 0.0,
        reg_lambda: 1.0,
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let phys = Physiology::default();
        let rows = generate_stage1(
            &Stage1Config {
                n: 1500,
                ..Default::default()
            },
            &phys,
            1,
        )
        .unwrap();
        let (x, y) = stage1_dataset(&rows).unwrap();
        let s1 = train(&x, &y, &hp(6), &mut SimRng::seed_from_u64(1)).unwrap();
        let fit = fit_bias(
            &CalibrationConfig::default(),
            &Stage1Config::default(),
            &phys,
            1,
        )
        .unwrap();
        let stage2 = generate_stage2(
            &Stage2Config {
                n: 3000,
                ..Default::default()
            },
            &s1,
            &fit,
            &phys,
            1,
        )
        .unwrap();
        let (x2, y2) = stage2.to_dataset().unwrap();
        let s2 = train(&x2, &y2, &hp(3), &mut SimRng::seed_from_u64(2)).unwrap();
        Fixture {
            models: TwoStageModels::new(s1, s2).unwrap(),
            stage2,
        }
    })
}

fn patient() -> PatientInput {
    PatientInput::new(65.0, Pressure::from_mmhg(21.0)).unwrap()
}

fn cfg(n: usize) -> InferenceConfig {
    InferenceConfig {
        n_draws: n,
        ..Default::default()
    }
}

fn profile(p: &PatientInput, priors: &PriorSet, n: usize, seed: u64) -> PosteriorProfile {
    profile_patient(p, &fixture().models, priors, &cfg(n), seed).unwrap()
}

#[test]
fn profile_invariants_hold() {
    let c = cfg(1000);
    let prof = profile(&patient(), &PriorSet::default(), 1000, 7);
    assert_eq!(prof.provenance.n_draws, 1000);
    let eps = c.porosity.porosity(prof.provenance.age_group);
    assert_eq!(prof.provenance.porosity, eps);
    for p in Parameter::ALL {
        assert_eq!(prof.draws.get(p).len(), 1000);
        assert!(prof.draws.get(p).iter().all(|v| v.is_finite() && *v > 0.0));
    }
    let d = &prof.draws;
    for i in 0..1000 {
        assert_eq!(d.c_trab[i], d.k_tm[i] * d.g[i] / c.mu.0);
        assert_eq!(
            d.d_p[i],
            pore_diameter(Permeability(d.k_tm[i]), eps, c.porosity.kozeny_k).unwrap()
        );
        assert!(patient().iop.value() - d.evp[i] > 10.0);
    }
}

#[test]
fn odd_length_median_is_middle_draw() {
    let prof = profile(&patient(), &PriorSet::default(), 101, 3);
    let mut k = prof.draws.k_tm.clone();
    k.sort_by(f64::total_cmp);
    assert_eq!(prof.median(Parameter::KTm), k[50]);
}

#[test]
fn degenerate_priors_collapse_to_a_point() {
    let prof = profile(&patient(), &PriorSet::default().degenerate(), 200, 1);
    for p in Parameter::ALL {
        let v = prof.draws.get(p);
        assert!(v.iter().all(|x| *x == v[0]), "{} varies", p.label());
        let s = prof.summary[&p];
        assert_eq!((s.q05, s.q95), (v[0], v[0]));
    }
}

#[test]
fn profiles_are_seed_deterministic() {
    let a = profile(&patient(), &PriorSet::default(), 300, 9)
        .to_json()
        .unwrap();
    let b = profile(&patient(), &PriorSet::default(), 300, 9)
        .to_json()
        .unwrap();
    let c = profile(&patient(), &PriorSet::default(), 300, 10)
        .to_json()
        .unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(
        PosteriorProfile::from_json(&a).unwrap().to_json().unwrap(),
        a
    );
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(PatientInput::new(19.9, Pressure::from_mmhg(15.0)).is_err());
    assert!(PatientInput::new(40.0, Pressure::from_mmhg(-1.0)).is_err());
    let f = fixture();
    let err = profile_patient(&patient(), &f.models, &PriorSet::default(), &cfg(0), 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let swapped =
        TwoStageModels::new(f.models.stage2.clone(), f.models.stage1.clone()).unwrap_err();
    assert!(matches!(swapped, Error::Schema(_)));
}

#[test]
fn iop_below_every_evp_exhausts_sampling() {
    let p = PatientInput::new(40.0, Pressure::from_mmhg(1.0)).unwrap();
    let err =
        profile_patient(&p, &fixture().models, &PriorSet::default(), &cfg(10), 1).unwrap_err();
    assert!(matches!(err, Error::SamplingExhausted { .. }));
}

#[test]
fn normalization_against_matching_reference_is_unity() {
    let prof = profile(&patient(), &PriorSet::default(), 300, 2);
    let medians: BTreeMap<Parameter, f64> = Parameter::ALL
        .iter()
        .map(|p| (*p, prof.median(*p)))
        .collect();
    let reference = ReferencePopulation {
        id: "self".into(),
        medians,
    };
    let n = normalize_profile(&prof, &reference).unwrap();
    assert_eq!(n.reference_id, "self");
    assert!(n.ratios.values().all(|r| *r == 1.0));

    let mut doubled = prof.clone();
    doubled.summary.get_mut(&Parameter::G).unwrap().median *= 2.0;
    assert_eq!(
        normalize_profile(&doubled, &reference).unwrap().ratios[&Parameter::G],
        2.0
    );

    let mut zero = reference.clone();
    zero.medians.insert(Parameter::KTm, 0.0);
    assert!(normalize_profile(&prof, &zero).is_err());
}

#[test]
fn reference_from_stage2_is_positive() {
    let r = ReferencePopulation::from_stage2("s2", &fixture().stage2, &Default::default()).unwrap();
    assert_eq!(r.medians.len(), Parameter::ALL.len());
    assert!(r.medians.values().all(|m| *m > 0.0));
}

#[test]
fn sensitivity_signs() {
    let rep = sensitivity_scan(
        &patient(),
        &fixture().models,
        &PriorSet::default(),
        &cfg(1000),
        4,
    )
    .unwrap();
    assert_eq!(
        rep.entries.len(),
        Scenario::ALL.len() * Parameter::ALL.len()
    );
    for p in Parameter::ALL {
        let e = rep.entry(Scenario::Baseline, p).unwrap();
        assert_eq!((e.median_change_pct, e.cv_change_pct), (0.0, 0.0));
    }
    assert!(
        rep.entry(Scenario::Narrow, Parameter::Evp)
            .unwrap()
            .cv_change_pct
            < 0.0
    );
    assert!(
        rep.entry(Scenario::Wide, Parameter::Evp)
            .unwrap()
            .cv_change_pct
            > 0.0
    );
    let narrow = rep.entry(Scenario::Narrow, Parameter::KTm).unwrap().cv;
    let wide = rep.entry(Scenario::Wide, Parameter::KTm).unwrap().cv;
    assert!(narrow < wide);
    assert!(
        rep.entry(Scenario::HighInflow, Parameter::QAh)
            .unwrap()
            .median_change_pct
            > 0.0
    );
    assert!(
        rep.entry(Scenario::LowInflow, Parameter::QAh)
            .unwrap()
            .median_change_pct
            < 0.0
    );
}

#[test]
fn radar_svg_is_deterministic() {
    let prof = profile(&patient(), &PriorSet::default(), 300, 2);
    let r = ReferencePopulation::from_stage2("s2", &fixture().stage2, &Default::default()).unwrap();
    let a = render_radar_svg(&prof, &r).unwrap();
    assert_eq!(a, render_radar_svg(&prof, &r).unwrap());
    assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
    for label in ["K_TM", "G", "C_trab", "Q_AH", "F_u", "EVP"] {
        assert!(a.contains(&format!(">{label}</text>")), "missing {label}");
    }
    assert!(a.contains("stroke-dasharray"));
}
