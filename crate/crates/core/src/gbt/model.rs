use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema, GbtHyperparams};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "outflow-gbt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `value < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { weight } => Some(*weight),
            Node::Split { .. } => None,
        })
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    fn check(&self, n_features: usize) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Artifact("tree with no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { weight } if !weight.is_finite() => {
                    return Err(Error::Artifact(format!(
                        "non-finite leaf weight at node {i}"
                    )))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features
                        || !threshold.is_finite()
                        || left <= i
                        || right <= i
                        || left >= n
                        || right >= n
                    {
                        return Err(Error::Artifact(format!("malformed split at node {i}")));
                    }
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format: String,
    pub version: u32,
    /// Mean of the training target.
    pub base_score: f64,
    pub hyperparams: GbtHyperparams,
    pub schema: FeatureSchema,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn new(
        base_score: f64,
        hyperparams: GbtHyperparams,
        schema: FeatureSchema,
        trees: Vec<Tree>,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            base_score,
            hyperparams,
            schema,
            trees,
        }
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(row)).sum();
        self.base_score + self.hyperparams.learning_rate * sum
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.schema.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite feature value"));
        }
        Ok(self.predict_unchecked(row))
    }

    pub fn predict_batch(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.schema.check_same(data.schema())?;
        Ok((0..data.n_rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(&data.row(i)))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TreeEnsemble = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Artifact(format!(
                "expected format `{MODEL_FORMAT}`, found `{}`",
                m.format
            )));
        }
        if m.version != MODEL_VERSION {
            return Err(Error::Artifact(format!(
                "model version {} not supported (expected {MODEL_VERSION})",
                m.version
            )));
        }
        for t in &m.trees {
            t.check(m.schema.len())?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
