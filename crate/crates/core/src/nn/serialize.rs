//! Versioned JSON model files.
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "arch": { ...NetworkArch... },
//!   "tensors": [ { "name": "fc.0.weight", "shape": [in, out], "data": [row-major] }, ... ],
//!   "optimizer": { ...OptimizerState... } | null
//! }
//! ```
//!
//! Tensor names: `embedding.{field}`, `{emb|fc}.{layer}.{weight|bias}` and
//! `{emb|fc}.{layer}.bn.{scale|shift|running_mean|running_var}`. Floats are
//! written in shortest round-trip form, so loading is bit-exact.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::arch::NetworkArch;
use super::params::{DenseParams, NetworkParams};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn matrix(name: String, m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        Self {
            name,
            shape: vec![m.nrows(), m.ncols()],
            data,
        }
    }

    fn vector(name: String, v: &DVector<f64>) -> Self {
        Self {
            name,
            shape: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub schema_version: u32,
    pub arch: NetworkArch,
    pub tensors: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
}

impl NetworkSnapshot {
    pub fn capture(
        arch: &NetworkArch,
        params: &NetworkParams,
        optimizer: Option<&OptimizerState>,
    ) -> Self {
        let mut tensors = Vec::new();
        for (f, table) in params.embeddings.iter().enumerate() {
            tensors.push(NamedTensor::matrix(format!("embedding.{f}"), table));
        }
        for (prefix, layers) in [("emb", &params.emb_layers), ("fc", &params.fc_layers)] {
            for (i, l) in layers.iter().enumerate() {
                tensors.push(NamedTensor::matrix(
                    format!("{prefix}.{i}.weight"),
                    &l.weight,
                ));
                tensors.push(NamedTensor::vector(format!("{prefix}.{i}.bias"), &l.bias));
                if let Some(bn) = &l.bn {
                    for (field, v) in [
                        ("scale", &bn.scale),
                        ("shift", &bn.shift),
                        ("running_mean", &bn.running_mean),
                        ("running_var", &bn.running_var),
                    ] {
                        tensors.push(NamedTensor::vector(format!("{prefix}.{i}.bn.{field}"), v));
                    }
                }
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            arch: arch.clone(),
            tensors,
            optimizer: optimizer.cloned(),
        }
    }

    /// Rebuilds parameters, checking every tensor against the declared arch.
    pub fn params(&self) -> Result<NetworkParams> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        self.arch.validate()?;
        let by_name: HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut params = NetworkParams::zeros(&self.arch);

        let matrix = |name: String, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::InvalidConfig(format!("missing tensor {name}")))?;
            if t.shape != [rows, cols] || t.data.len() != rows * cols {
                return Err(Error::InvalidConfig(format!(
                    "tensor {name} has wrong shape"
                )));
            }
            Ok(DMatrix::from_row_slice(rows, cols, &t.data))
        };
        let vector = |name: String, len: usize| -> Result<DVector<f64>> {
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::InvalidConfig(format!("missing tensor {name}")))?;
            if t.shape != [len] || t.data.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "tensor {name} has wrong shape"
                )));
            }
            Ok(DVector::from_column_slice(&t.data))
        };

        for (f, spec) in self.arch.embeddings.iter().enumerate() {
            params.embeddings[f] = matrix(format!("embedding.{f}"), spec.vocab, spec.dim)?;
        }
        let load = |prefix: &str, layers: &mut Vec<DenseParams>| -> Result<()> {
            for (i, l) in layers.iter_mut().enumerate() {
                let (rows, cols) = l.weight.shape();
                l.weight = matrix(format!("{prefix}.{i}.weight"), rows, cols)?;
                l.bias = vector(format!("{prefix}.{i}.bias"), cols)?;
                if let Some(bn) = &mut l.bn {
                    bn.scale = vector(format!("{prefix}.{i}.bn.scale"), cols)?;
                    bn.shift = vector(format!("{prefix}.{i}.bn.shift"), cols)?;
                    bn.running_mean = vector(format!("{prefix}.{i}.bn.running_mean"), cols)?;
                    bn.running_var = vector(format!("{prefix}.{i}.bn.running_var"), cols)?;
                }
            }
            Ok(())
        };
        load("emb", &mut params.emb_layers)?;
        load("fc", &mut params.fc_layers)?;
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
