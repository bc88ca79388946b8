//! Provenance stamps and the versioned JSON envelope shared by artifacts.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// sha256 of the canonical configuration JSON.
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool_version: crate::VERSION.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    /// Leading `#` line written at the top of CSV artifacts.
    pub fn comment_line(&self) -> String {
        format!(
            "# outflow {} config_sha256={} seed={}",
            self.tool_version, self.config_hash, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Float text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub data: T,
}

pub const ENVELOPE_VERSION: u32 = 1;

impl<T: Serialize + DeserializeOwned> Envelope<T> {
    pub fn new(format: &str, provenance: Provenance, data: T) -> Self {
        Self {
            format: format.into(),
            version: ENVELOPE_VERSION,
            provenance,
            data,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str, format: &str) -> Result<Self> {
        let env: Envelope<T> = serde_json::from_str(s)?;
        if env.format != format {
            return Err(Error::Artifact(format!(
                "expected `{format}`, found `{}`",
                env.format
            )));
        }
        if env.version != ENVELOPE_VERSION {
            return Err(Error::Artifact(format!(
                "`{format}` version {} not supported (expected {ENVELOPE_VERSION})",
                env.version
            )));
        }
        Ok(env)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, format: &str) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, format)
    }
}
