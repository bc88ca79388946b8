use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical input expanded into indicator columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub source: String,
    pub levels: Vec<String>,
    /// Column of the first level; the rest follow in order.
    pub first_column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<CategoricalEncoding>,
}

impl FeatureSchema {
    pub fn numeric<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            names: names.into_iter().map(Into::into).collect(),
            categorical: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn check_same(&self, other: &FeatureSchema) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Schema(format!(
                "expected features {:?}, got {:?}",
                self.names, other.names
            )));
        }
        Ok(())
    }
}

/// Column-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    pub fn from_columns(schema: FeatureSchema, columns: Vec<Vec<f64>>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::Schema("empty feature set".into()));
        }
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} features",
                columns.len(),
                schema.len()
            )));
        }
        let n_rows = columns[0].len();
        for (name, col) in schema.names.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{name}` has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::domain(format!(
                    "column `{name}` row {i} is not finite"
                )));
            }
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>]) -> Result<Self> {
        let p = schema.len();
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Schema(format!(
                "row {i} has {} values, expected {p}",
                rows[i].len()
            )));
        }
        let columns = (0..p)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_columns(schema, columns)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    pub(crate) fn with_column(&self, j: usize, values: Vec<f64>) -> Dataset {
        let mut out = self.clone();
        out.columns[j] = values;
        out
    }
}
