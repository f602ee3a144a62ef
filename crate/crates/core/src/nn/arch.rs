use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the structural head: `(alpha, beta)`.
pub const THETA_WIDTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub vocab: usize,
    pub dim: usize,
}

/// One dense layer: `dense -> [batch norm] -> [relu] -> [dropout]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub relu: bool,
    pub dropout: f64,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn linear(input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            relu: false,
            dropout: 0.0,
            batch_norm: false,
        }
    }
}

/// Two fixed subnetworks: the item encoder (embedding lookups followed by
/// dense layers) and the head that maps `[encoding, numeric]` to theta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub embeddings: Vec<EmbeddingSpec>,
    pub emb_layers: Vec<LayerSpec>,
    pub fc_layers: Vec<LayerSpec>,
    pub n_numeric: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl NetworkArch {
    pub fn lookup_width(&self) -> usize {
        self.embeddings.iter().map(|e| e.dim).sum()
    }

    /// Output width of the item encoder.
    pub fn encoding_width(&self) -> usize {
        self.emb_layers
            .last()
            .map_or_else(|| self.lookup_width(), |l| l.output)
    }

    pub fn fc_input_width(&self) -> usize {
        self.encoding_width() + self.n_numeric
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.iter().any(|e| e.vocab == 0 || e.dim == 0) {
            return Err(Error::InvalidConfig(
                "embedding tables need vocab >= 1 and dim >= 1".into(),
            ));
        }
        if self.embeddings.is_empty() && !self.emb_layers.is_empty() {
            return Err(Error::InvalidConfig(
                "encoder layers require at least one embedding table".into(),
            ));
        }
        chain("encoder layer input", self.lookup_width(), &self.emb_layers)?;
        if self.fc_layers.is_empty() {
            return Err(Error::InvalidConfig("head needs at least one layer".into()));
        }
        chain("head layer input", self.fc_input_width(), &self.fc_layers)?;
        let last = self.fc_layers.last().expect("non-empty");
        if last.output != THETA_WIDTH {
            return Err(Error::dims("head output", THETA_WIDTH, last.output));
        }
        for l in self.emb_layers.iter().chain(&self.fc_layers) {
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
            }
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || !(self.bn_eps > 0.0) {
            return Err(Error::InvalidConfig(
                "batch-norm momentum must be in (0, 1] and eps positive".into(),
            ));
        }
        Ok(())
    }
}

fn chain(what: &'static str, mut width: usize, layers: &[LayerSpec]) -> Result<()> {
    for l in layers {
        if l.input != width {
            return Err(Error::dims(what, width, l.input));
        }
        if l.output == 0 {
            return Err(Error::InvalidConfig("layer width must be positive".into()));
        }
        width = l.output;
    }
    Ok(())
}
