use std::fs;
use std::path::{Path, PathBuf};

use outflow_core::artifact::{Envelope, Provenance};
use outflow_core::gbt::{FitReport, SearchOutcome, TreeEnsemble};
use outflow_core::inference::{ReferencePopulation, TwoStageModels};
use outflow_core::pcds::{
    read_stage1_csv, read_stage2_csv, read_stage2_latent_csv, CalibrationFit, Stage1Row,
    Stage2Dataset,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const STAGE1_CSV: &str = "stage1.csv";
pub const STAGE2_CSV: &str = "stage2.csv";
pub const STAGE2_LATENT_CSV: &str = "stage2_latent.csv";
pub const CALIBRATION: &str = "calibration.json";
pub const STAGE1_MODEL: &str = "stage1_model.json";
pub const STAGE2_MODEL: &str = "stage2_model.json";
pub const REFERENCE: &str = "reference.json";
pub const PROFILES_DIR: &str = "profiles";

pub const FMT_CALIBRATION: &str = "outflow-calibration";
pub const FMT_MODEL: &str = "outflow-model";
pub const FMT_REFERENCE: &str = "outflow-reference";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub stage: u8,
    pub model: TreeEnsemble,
    pub report: FitReport,
    pub search: Option<SearchOutcome>,
}

pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(|source| CliError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an input artifact, or an error naming the command that
    /// produces it.
    pub fn require(&self, name: &str, command: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                path: p,
                command: command.into(),
            })
        }
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(&p, contents).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        })?;
        Ok(p)
    }

    pub fn save_json<T: Serialize + DeserializeOwned>(
        &self,
        name: &str,
        format: &str,
        provenance: &Provenance,
        data: T,
    ) -> CliResult<PathBuf> {
        self.write(
            name,
            Envelope::new(format, provenance.clone(), data).to_json()?,
        )
    }

    fn load_json<T: Serialize + DeserializeOwned>(
        &self,
        name: &str,
        format: &str,
        command: &str,
    ) -> CliResult<T> {
        let p = self.require(name, command)?;
        Ok(Envelope::<T>::load(&p, format)?.data)
    }

    pub fn stage1_rows(&self) -> CliResult<Vec<Stage1Row>> {
        let p = self.require(STAGE1_CSV, "generate --stage 1")?;
        Ok(read_stage1_csv(open(&p)?)?)
    }

    pub fn stage2_data(&self) -> CliResult<Stage2Dataset> {
        let rows = read_stage2_csv(open(&self.require(STAGE2_CSV, "generate --stage 2")?)?)?;
        let latent = read_stage2_latent_csv(open(
            &self.require(STAGE2_LATENT_CSV, "generate --stage 2")?,
        )?)?;
        Ok(Stage2Dataset { rows, latent })
    }

    pub fn calibration(&self) -> CliResult<CalibrationFit> {
        self.load_json(CALIBRATION, FMT_CALIBRATION, "calibrate")
    }

    pub fn model(&self, stage: u8) -> CliResult<ModelArtifact> {
        let (name, cmd) = match stage {
            1 => (STAGE1_MODEL, "train --stage 1"),
            _ => (STAGE2_MODEL, "train --stage 2"),
        };
        self.load_json(name, FMT_MODEL, cmd)
    }

    pub fn models(&self) -> CliResult<TwoStageModels> {
        Ok(TwoStageModels::new(
            self.model(1)?.model,
            self.model(2)?.model,
        )?)
    }

    pub fn reference(&self) -> CliResult<ReferencePopulation> {
        self.load_json(REFERENCE, FMT_REFERENCE, "train --stage 2")
    }
}

pub fn open(p: &Path) -> CliResult<fs::File> {
    fs::File::open(p).map_err(|source| CliError::Io {
        path: p.to_path_buf(),
        source,
    })
}
