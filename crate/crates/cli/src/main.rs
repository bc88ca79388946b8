//! `outflow`: generate, calibrate, train, profile and validate from one
//! JSON configuration.

mod error;
mod report;
mod workdir;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use outflow_core::artifact::Provenance;
use outflow_core::cohorts::load_cohorts;
use outflow_core::config::PipelineConfig;
use outflow_core::inference::{profile_patient, render_radar_svg, PatientInput, PosteriorProfile};
use outflow_core::pcds::{write_stage1_csv, write_stage2_csv, write_stage2_latent_csv};
use outflow_core::pipeline::{self, ValidationPair};
use outflow_core::risk::assign_ground_truth;
use outflow_core::sampling::derive_seed;
use outflow_core::units::{Facility, Pressure};

use error::{CliError, CliResult};
use report::CohortLabel;
use workdir::*;

#[derive(Parser)]
#[command(
    name = "outflow",
    version,
    about = "Trabecular outflow profiling from age and IOP"
)]
struct Cli {
    /// Directory holding all artifacts.
    #[arg(long, global = true, env = "OUTFLOW_WORKDIR", default_value = ".")]
    workdir: PathBuf,
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true, env = "OUTFLOW_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the effective configuration to config.json in the workdir.
    Config,
    /// Generate the stage 1 emulator dataset or the stage 2 population.
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Overrides the configured row count.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit the reference-model bias line.
    Calibrate,
    /// Train the stage 1 or stage 2 model.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
    },
    /// Profile one patient.
    Infer {
        #[arg(long)]
        age: f64,
        /// IOP in mmHg.
        #[arg(long)]
        iop: f64,
        /// Profile file stem under profiles/.
        #[arg(long)]
        name: Option<String>,
    },
    /// Agreement of estimated with measured facility.
    Validate {
        /// Round trip on synthetic patients with known facility.
        #[arg(long, conflicts_with_all = ["profiles", "measured"])]
        synthetic: bool,
        /// Directory of profile JSON files.
        #[arg(long, requires = "measured")]
        profiles: Option<PathBuf>,
        /// CSV with columns id,c_trab (µL/min/mmHg); id is the profile file stem.
        #[arg(long, requires = "profiles")]
        measured: Option<PathBuf>,
    },
    /// Derive and check permeability risk thresholds.
    Thresholds {
        /// Cohort descriptor CSV to label with the rule engine.
        #[arg(long)]
        cohorts: Option<PathBuf>,
    },
    /// Prior sensitivity scan.
    Sensitivity {
        #[arg(long, requires = "iop")]
        age: Option<f64>,
        /// IOP in mmHg.
        #[arg(long, requires = "age")]
        iop: Option<f64>,
    },
    /// Render a profile as an SVG radar chart.
    ProfileSvg {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(
    wd: &Workdir,
    stem: &str,
    format: &str,
    prov: &Provenance,
    data: impl serde::Serialize + serde::de::DeserializeOwned,
    text: String,
) -> CliResult<()> {
    let json = wd.save_json(&format!("{stem}.json"), format, prov, data)?;
    let txt = wd.write(
        &format!("{stem}.txt"),
        format!("{}\n{text}", prov.comment_line()),
    )?;
    print!("{text}");
    println!("wrote {} and {}", json.display(), txt.display());
    Ok(())
}

fn read_profile(p: &Path) -> CliResult<PosteriorProfile> {
    let s = std::fs::read_to_string(p).map_err(|source| CliError::Io {
        path: p.to_path_buf(),
        source,
    })?;
    Ok(PosteriorProfile::from_json(&s)?)
}

fn read_measured(p: &Path) -> CliResult<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(open(p)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(core_csv)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["id", "c_trab"] {
        return Err(CliError::Usage(format!(
            "{}: expected columns id,c_trab",
            p.display()
        )));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(core_csv)?;
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| outflow_core::Error::Parse {
                row: i + 1,
                column: "c_trab".into(),
                message: format!("`{}` is not a number", &rec[1]),
            })?;
        out.insert(rec[0].trim().to_string(), v);
    }
    Ok(out)
}

fn core_csv(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli)?;
    let wd = Workdir::new(cli.workdir.clone())?;
    match cli.command {
        Command::Config => {
            cfg.validate()?;
            let p = wd.write("config.json", cfg.to_json()?)?;
            println!("wrote {} (sha256 {})", p.display(), cfg.hash()?);
        }
        Command::Generate { stage, n } => {
            if let Some(n) = n {
                match stage {
                    1 => cfg.stage1.n = n,
                    _ => cfg.stage2.n = n,
                }
            }
            cfg.validate()?;
            let prov = cfg.provenance()?;
            if stage == 1 {
                let rows = pipeline::stage1_rows(&cfg)?;
                let mut buf = Vec::new();
                write_stage1_csv(&mut buf, &rows, Some(&prov))?;
                let p = wd.write(STAGE1_CSV, buf)?;
                println!("wrote {} ({} rows)", p.display(), rows.len());
            } else {
                let fit = wd.calibration()?;
                let s1 = wd.model(1)?;
                let data = pipeline::stage2_population(&cfg, &s1.model, &fit)?;
                let (mut rows, mut latent) = (Vec::new(), Vec::new());
                write_stage2_csv(&mut rows, &data.rows, Some(&prov))?;
                write_stage2_latent_csv(&mut latent, &data.latent, Some(&prov))?;
                let p = wd.write(STAGE2_CSV, rows)?;
                wd.write(STAGE2_LATENT_CSV, latent)?;
                println!(
                    "wrote {} ({} rows) and {}",
                    p.display(),
                    data.rows.len(),
                    STAGE2_LATENT_CSV
                );
            }
        }
        Command::Calibrate => {
            cfg.validate()?;
            let fit = pipeline::calibrate(&cfg)?;
            let prov = cfg.provenance()?;
            wd.save_json(CALIBRATION, FMT_CALIBRATION, &prov, fit)?;
            wd.write(
                "calibration.txt",
                format!("{}\n{}", prov.comment_line(), report::calibration(&fit)),
            )?;
            print!("{}", report::calibration(&fit));
        }
        Command::Train { stage } => {
            cfg.validate()?;
            let prov = cfg.provenance()?;
            let trained = if stage == 1 {
                pipeline::train_stage1(&cfg, &wd.stage1_rows()?)?
            } else {
                let data = wd.stage2_data()?;
                let reference = pipeline::reference_population(&cfg, &data)?;
                wd.save_json(REFERENCE, FMT_REFERENCE, &prov, reference)?;
                pipeline::train_stage2(&cfg, &data)?
            };
            print!("{}", report::fit(stage, &trained.report));
            let art = ModelArtifact {
                stage,
                model: trained.model,
                report: trained.report,
                search: trained.search,
            };
            let name = if stage == 1 {
                STAGE1_MODEL
            } else {
                STAGE2_MODEL
            };
            let p = wd.save_json(name, FMT_MODEL, &prov, art)?;
            println!("wrote {}", p.display());
        }
        Command::Infer { age, iop, name } => {
            cfg.validate()?;
            let models = wd.models()?;
            let patient = PatientInput::new(age, Pressure::from_mmhg(iop))?;
            let prof = profile_patient(
                &patient,
                &models,
                &cfg.physiology.priors,
                &cfg.inference()?,
                derive_seed(cfg.seed, "infer", 0),
            )?;
            let stem = name.unwrap_or_else(|| format!("age{age}_iop{iop}"));
            let p = wd.write(&format!("{PROFILES_DIR}/{stem}.json"), prof.to_json()?)?;
            print!("{}", report::profile(&prof));
            println!("wrote {}", p.display());
        }
        Command::Validate {
            synthetic,
            profiles,
            measured,
        } => {
            cfg.validate()?;
            let rep = match (synthetic, profiles, measured) {
                (true, _, _) => pipeline::validate_synthetic(&cfg, &wd.models()?)?,
                (false, Some(dir), Some(meas)) => {
                    let measured = read_measured(&meas)?;
                    let mut pairs = Vec::new();
                    for (i, (id, m)) in measured.iter().enumerate() {
                        let prof = read_profile(&dir.join(format!("{id}.json")))?;
                        pairs.push(ValidationPair {
                            id: i,
                            archetype: id.clone(),
                            age_years: prof.patient.age_years,
                            iop_mmhg: prof.patient.iop.mmhg(),
                            measured: *m,
                            estimated: Facility::new(
                                prof.summary[&outflow_core::inference::Parameter::CTrab].median,
                            )
                            .ul_min_mmhg(),
                        });
                    }
                    pipeline::validation_report(&cfg, pairs)?
                }
                _ => {
                    return Err(CliError::Usage(
                        "validate needs --synthetic or --profiles with --measured".into(),
                    ))
                }
            };
            let text = report::validation(&rep);
            emit(
                &wd,
                "validation",
                "outflow-validation",
                &cfg.provenance()?,
                rep,
                text,
            )?;
        }
        Command::Thresholds { cohorts } => {
            cfg.validate()?;
            let rep = pipeline::risk_thresholds(&cfg, &wd.models()?)?;
            let mut labels = Vec::new();
            if let Some(p) = cohorts {
                for c in load_cohorts(&p)? {
                    labels.push(CohortLabel {
                        id: c.id,
                        description: c.description.clone(),
                        rule_label: assign_ground_truth(&c)?.code().into(),
                        curated_label: c.label.map(|l| l.code().into()),
                    });
                }
            }
            let text = report::thresholds(&rep, &labels);
            emit(
                &wd,
                "thresholds",
                "outflow-thresholds",
                &cfg.provenance()?,
                (rep, labels),
                text,
            )?;
        }
        Command::Sensitivity { age, iop } => {
            cfg.validate()?;
            let models = wd.models()?;
            let patients = match (age, iop) {
                (Some(a), Some(i)) => vec![PatientInput::new(a, Pressure::from_mmhg(i))?],
                _ => pipeline::sensitivity_patients(&cfg)?,
            };
            let reps = pipeline::run_sensitivity(&cfg, &models, &patients)?;
            let text = report::sensitivity(&reps);
            emit(
                &wd,
                "sensitivity",
                "outflow-sensitivity",
                &cfg.provenance()?,
                reps,
                text,
            )?;
        }
        Command::ProfileSvg { profile, out } => {
            let prof = read_profile(&profile)?;
            let svg = render_radar_svg(&prof, &wd.reference()?)?;
            let out = out.unwrap_or_else(|| profile.with_extension("svg"));
            let header = format!(
                "<!-- outflow {} config_sha256={} seed={} -->\n",
                prof.provenance.tool_version, prof.provenance.config_hash, prof.provenance.seed
            );
            std::fs::write(&out, header + &svg).map_err(|source| CliError::Io {
                path: out.clone(),
                source,
            })?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
