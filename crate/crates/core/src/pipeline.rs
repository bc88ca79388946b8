//! End-to-end orchestration: data generation, calibration, the two model
//! fits, synthetic validation, risk thresholds and sensitivity scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSettings, PipelineConfig};
use crate::error::{Error, Result};
use crate::gbt::{
    fit_with_holdout, random_search, Dataset, FitReport, SearchOutcome, TreeEnsemble,
};
use crate::inference::{
    profile_patient, sensitivity_scan, Parameter, PatientInput, ReferencePopulation,
    SensitivityReport, TwoStageModels,
};
use crate::pcds::{
    fit_bias, generate_stage1, generate_stage2, stage1_dataset, synthesize_patients, Archetype,
    CalibrationFit, HiddenState, NoiseModel, PatientSynthesis, Stage1Row, Stage2Dataset,
    SyntheticPatient,
};
use crate::risk::{
    classify, derive_thresholds, score_classification, ClassificationScore, RiskLabel,
    RiskThresholds,
};
use crate::sampling::{derive_seed, stream_rng};
use crate::stats::{
    bland_altman, bootstrap_ci, icc_2_1, kruskal_wallis, mann_whitney_bonferroni, spearman_rho,
    BlandAltman, PairwiseTest, TestResult,
};
use crate::units::Permeability;

pub const REFERENCE_ID: &str = "stage2-synthetic-median";

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: TreeEnsemble,
    pub report: FitReport,
    pub search: Option<SearchOutcome>,
}

/// Fits with fixed hyperparameters, or runs the random search on all rows
/// and refits the winner with the 80/20 hold-out.
pub fn train_model(
    settings: &ModelSettings,
    data: &Dataset,
    target: &[f64],
    seed: u64,
) -> Result<TrainedModel> {
    settings.validate()?;
    let (hp, search) = match settings {
        ModelSettings::Fixed { hyperparams } => (*hyperparams, None),
        ModelSettings::Search {
            space,
            k_folds,
            n_iter,
        } => {
            let mut rng = stream_rng(seed, "gbt-search", 0);
            let out = random_search(data, target, space, *k_folds, *n_iter, &mut rng)?;
            (out.best, Some(out))
        }
    };
    let (model, report) = fit_with_holdout(data, target, &hp, seed)?;
    Ok(TrainedModel {
        model,
        report,
        search,
    })
}

pub fn stage1_rows(cfg: &PipelineConfig) -> Result<Vec<Stage1Row>> {
    generate_stage1(&cfg.stage1, &cfg.physiology, cfg.seed)
}

pub fn calibrate(cfg: &PipelineConfig) -> Result<CalibrationFit> {
    fit_bias(&cfg.calibration, &cfg.stage1, &cfg.physiology, cfg.seed)
}

pub fn train_stage1(cfg: &PipelineConfig, rows: &[Stage1Row]) -> Result<TrainedModel> {
    let (data, target) = stage1_dataset(rows)?;
    train_model(
        &cfg.gbt.stage1,
        &data,
        &target,
        derive_seed(cfg.seed, "stage1-model", 0),
    )
}

pub fn stage2_population(
    cfg: &PipelineConfig,
    stage1: &TreeEnsemble,
    fit: &CalibrationFit,
) -> Result<Stage2Dataset> {
    generate_stage2(&cfg.stage2, stage1, fit, &cfg.physiology, cfg.seed)
}

pub fn train_stage2(cfg: &PipelineConfig, data: &Stage2Dataset) -> Result<TrainedModel> {
    let (x, y) = data.to_dataset()?;
    train_model(
        &cfg.gbt.stage2,
        &x,
        &y,
        derive_seed(cfg.seed, "stage2-model", 0),
    )
}

pub fn reference_population(
    cfg: &PipelineConfig,
    data: &Stage2Dataset,
) -> Result<ReferencePopulation> {
    ReferencePopulation::from_stage2(REFERENCE_ID, data, &cfg.porosity)
}

/// Everything produced up to and including the two trained models.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub stage1_rows: Vec<Stage1Row>,
    pub calibration: CalibrationFit,
    pub stage1: TrainedModel,
    pub stage2_data: Stage2Dataset,
    pub stage2: TrainedModel,
    pub reference: ReferencePopulation,
}

impl TrainedPipeline {
    pub fn models(&self) -> Result<TwoStageModels> {
        TwoStageModels::new(self.stage1.model.clone(), self.stage2.model.clone())
    }
}

pub fn build_models(cfg: &PipelineConfig) -> Result<TrainedPipeline> {
    cfg.validate()?;
    let stage1_rows = stage1_rows(cfg)?;
    let calibration = calibrate(cfg)?;
    let stage1 = train_stage1(cfg, &stage1_rows)?;
    let stage2_data = stage2_population(cfg, &stage1.model, &calibration)?;
    let stage2 = train_stage2(cfg, &stage2_data)?;
    let reference = reference_population(cfg, &stage2_data)?;
    Ok(TrainedPipeline {
        stage1_rows,
        calibration,
        stage1,
        stage2_data,
        stage2,
        reference,
    })
}

/// Posterior medians of the given parameter, one per patient, each patient
/// profiled on its own derived stream.
pub fn posterior_medians(
    cfg: &PipelineConfig,
    models: &TwoStageModels,
    patients: &[PatientInput],
    stream: &str,
    parameter: Parameter,
) -> Result<Vec<f64>> {
    let inf = cfg.inference()?;
    patients
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let seed = derive_seed(cfg.seed, stream, i as u64);
            Ok(profile_patient(p, models, &cfg.physiology.priors, &inf, seed)?.median(parameter))
        })
        .collect()
}

fn inputs(patients: &[SyntheticPatient]) -> Result<Vec<PatientInput>> {
    patients
        .iter()
        .map(|p| PatientInput::new(p.age_years, p.iop))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub bland_altman: BlandAltman,
    pub bias_ci: (f64, f64),
    pub loa_lower_ci: (f64, f64),
    pub loa_upper_ci: (f64, f64),
    pub spearman: TestResult,
    pub spearman_ci: (f64, f64),
    pub icc: f64,
    pub icc_ci: (f64, f64),
    pub n_resamples: usize,
}

/// Agreement between estimated and measured values with percentile
/// bootstrap intervals over resampled pairs. Resamples where a statistic is
/// undefined are skipped.
pub fn agreement_report(
    estimated: &[f64],
    measured: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<AgreementReport> {
    let ba = bland_altman(estimated, measured)?;
    let spearman = spearman_rho(estimated, measured)?;
    let pairs: Vec<[f64; 2]> = estimated
        .iter()
        .zip(measured)
        .map(|(e, m)| [*e, *m])
        .collect();
    let icc = icc_2_1(&pairs)?;
    let split = |d: &[[f64; 2]]| -> (Vec<f64>, Vec<f64>) {
        (
            d.iter().map(|p| p[0]).collect(),
            d.iter().map(|p| p[1]).collect(),
        )
    };
    let ba_of = |d: &[[f64; 2]]| {
        let (e, m) = split(d);
        bland_altman(&e, &m).ok()
    };
    // Every statistic sees the same resamples.
    let ci = |f: &(dyn Fn(&[[f64; 2]]) -> f64 + Sync)| {
        bootstrap_ci(
            &pairs,
            f,
            n_resamples,
            &mut stream_rng(seed, "bootstrap", 0),
        )
    };
    Ok(AgreementReport {
        n: pairs.len(),
        bland_altman: ba,
        bias_ci: ci(&|d| ba_of(d).map_or(f64::NAN, |b| b.bias))?,
        loa_lower_ci: ci(&|d| ba_of(d).map_or(f64::NAN, |b| b.loa_lower))?,
        loa_upper_ci: ci(&|d| ba_of(d).map_or(f64::NAN, |b| b.loa_upper))?,
        spearman,
        spearman_ci: ci(&|d| {
            let (e, m) = split(d);
            spearman_rho(&e, &m).map_or(f64::NAN, |t| t.statistic)
        })?,
        icc,
        icc_ci: ci(&|d| icc_2_1(d).unwrap_or(f64::NAN))?,
        n_resamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPair {
    pub id: usize,
    pub archetype: String,
    pub age_years: f64,
    pub iop_mmhg: f64,
    /// Known facility, µL/min/mmHg.
    pub measured: f64,
    /// Posterior median facility, µL/min/mmHg.
    pub estimated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub agreement: AgreementReport,
    pub pairs: Vec<ValidationPair>,
}

pub fn validation_report(
    cfg: &PipelineConfig,
    pairs: Vec<ValidationPair>,
) -> Result<ValidationReport> {
    let est: Vec<f64> = pairs.iter().map(|p| p.estimated).collect();
    let meas: Vec<f64> = pairs.iter().map(|p| p.measured).collect();
    let agreement = agreement_report(
        &est,
        &meas,
        cfg.validation.bootstrap_resamples,
        derive_seed(cfg.seed, "validation-bootstrap", 0),
    )?;
    Ok(ValidationReport { agreement, pairs })
}

/// Round trip on synthetic patients with known facility.
pub fn validate_synthetic(
    cfg: &PipelineConfig,
    models: &TwoStageModels,
) -> Result<ValidationReport> {
    let patients = synthesize_patients(&cfg.validation.patients, &cfg.physiology, cfg.seed)?;
    let est = posterior_medians(
        cfg,
        models,
        &inputs(&patients)?,
        "validation-profile",
        Parameter::CTrab,
    )?;
    let pairs = patients
        .iter()
        .zip(est)
        .map(|(p, c)| ValidationPair {
            id: p.id,
            archetype: p.archetype.clone(),
            age_years: p.age_years,
            iop_mmhg: p.iop.mmhg(),
            measured: p.c_trab.ul_min_mmhg(),
            estimated: crate::units::Facility::new(c).ul_min_mmhg(),
        })
        .collect();
    validation_report(cfg, pairs)
}

fn archetype_patients(
    cfg: &PipelineConfig,
    a: &Archetype,
    n: usize,
    stream: &str,
) -> Result<Vec<SyntheticPatient>> {
    let synth = PatientSynthesis {
        n,
        age_min: cfg.validation.patients.age_min,
        age_max: cfg.validation.patients.age_max,
        archetypes: vec![a.clone()],
        hidden: cfg.thresholds.hidden,
        noise: NoiseModel::None,
    };
    synthesize_patients(&synth, &cfg.physiology, derive_seed(cfg.seed, stream, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCohort {
    pub archetype: String,
    pub truth: RiskLabel,
    pub median_ktm: f64,
    pub predicted: RiskLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub thresholds: RiskThresholds,
    pub warning: Option<String>,
    pub n_derive: usize,
    pub cohorts: Vec<EvalCohort>,
    pub score: ClassificationScore,
    /// Individual posterior-median K_TM of the evaluation members, grouped
    /// by archetype.
    pub kruskal_wallis: TestResult,
    pub pairwise: Vec<PairwiseTest>,
}

/// Places the thresholds on posterior-median K_TM of Normal and Compromised
/// archetype patients, then classifies fresh cohorts of every archetype by
/// their median K_TM.
pub fn risk_thresholds(cfg: &PipelineConfig, models: &TwoStageModels) -> Result<ThresholdReport> {
    let t = &cfg.thresholds;
    let normal = archetype_patients(cfg, &t.normal, t.n_derive, "threshold-normal")?;
    let compromised = archetype_patients(cfg, &t.compromised, t.n_derive, "threshold-compromised")?;
    let k_normal = posterior_medians(
        cfg,
        models,
        &inputs(&normal)?,
        "threshold-normal-profile",
        Parameter::KTm,
    )?;
    let k_comp = posterior_medians(
        cfg,
        models,
        &inputs(&compromised)?,
        "threshold-compromised-profile",
        Parameter::KTm,
    )?;
    let thresholds = derive_thresholds(&k_normal, &k_comp)?;

    let groups = [
        (&t.normal, RiskLabel::Normal),
        (&t.borderline, RiskLabel::Borderline),
        (&t.compromised, RiskLabel::Compromised),
    ];
    let mut cohorts = Vec::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    for (a, truth) in groups {
        let stream = format!("threshold-eval-{}", a.name.to_lowercase());
        let n = t.eval_cohorts * t.eval_cohort_size;
        let pats = archetype_patients(cfg, a, n, &stream)?;
        let k = posterior_medians(
            cfg,
            models,
            &inputs(&pats)?,
            &format!("{stream}-profile"),
            Parameter::KTm,
        )?;
        for chunk in k.chunks(t.eval_cohort_size) {
            let m = crate::stats::quantile(chunk, 0.5)?;
            cohorts.push(EvalCohort {
                archetype: a.name.clone(),
                truth,
                median_ktm: m,
                predicted: classify(Permeability(m), &thresholds),
            });
        }
        members.push(k);
    }
    let truth: Vec<RiskLabel> = cohorts.iter().map(|c| c.truth).collect();
    let pred: Vec<RiskLabel> = cohorts.iter().map(|c| c.predicted).collect();
    let refs: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
    Ok(ThresholdReport {
        thresholds,
        warning: thresholds.warning(),
        n_derive: t.n_derive,
        score: score_classification(&truth, &pred)?,
        kruskal_wallis: kruskal_wallis(&refs)?,
        pairwise: mann_whitney_bonferroni(&refs)?,
        cohorts,
    })
}

/// Synthetic patients for the sensitivity protocol, at prior-mean hidden
/// state without measurement noise.
pub fn sensitivity_patients(cfg: &PipelineConfig) -> Result<Vec<PatientInput>> {
    let synth = PatientSynthesis {
        n: cfg.sensitivity.n_patients,
        hidden: HiddenState::PriorMean,
        noise: NoiseModel::None,
        ..cfg.validation.patients.clone()
    };
    inputs(&synthesize_patients(
        &synth,
        &cfg.physiology,
        derive_seed(cfg.seed, "sensitivity-patients", 0),
    )?)
}

pub fn run_sensitivity(
    cfg: &PipelineConfig,
    models: &TwoStageModels,
    patients: &[PatientInput],
) -> Result<Vec<SensitivityReport>> {
    if patients.is_empty() {
        return Err(Error::InsufficientData("no patients to scan".into()));
    }
    let inf = cfg.inference()?;
    patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            sensitivity_scan(
                p,
                models,
                &cfg.physiology.priors,
                &inf,
                derive_seed(cfg.seed, "sensitivity", i as u64),
            )
        })
        .collect()
}
