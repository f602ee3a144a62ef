//! Structural network estimator: predicts `(alpha, beta)` of a linear demand
//! head from item and environment features, trained on observed sales.

mod prep;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EmbeddingSpec, LayerSpec, NetworkArch, THETA_WIDTH};

pub use prep::{Preprocessing, TargetSpace};
pub use train::{train, write_loss_history_csv, EpochLoss, LossHistory, StepLoss, TrainedModel};

/// Output width of the item encoder.
pub const ENCODING_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub embedding_dim: usize,
    /// Hidden widths of the encoder; a final linear layer to
    /// [`ENCODING_WIDTH`] is appended.
    pub encoder_hidden: Vec<usize>,
    /// Hidden widths of the head; a final linear layer to theta is appended.
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            encoder_hidden: vec![256, 128],
            head_hidden: vec![256, 128, 64, 32],
            dropout: 0.1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

/// Default architecture for the given vocabularies and numeric width.
pub fn build_architecture(vocabs: &[usize], n_numeric: usize) -> Result<NetworkArch> {
    build_architecture_with(vocabs, n_numeric, &ArchConfig::default())
}

/// Encoder: lookups, then rectified dense layers with dropout, then a linear
/// layer to 64. Head: `[encoding, numeric]` through dense layers with batch
/// norm, rectifier and dropout, then a linear layer to `(alpha, beta)`.
pub fn build_architecture_with(
    vocabs: &[usize],
    n_numeric: usize,
    cfg: &ArchConfig,
) -> Result<NetworkArch> {
    if vocabs.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one categorical field is required".into(),
        ));
    }
    if vocabs.contains(&0) {
        return Err(Error::InvalidConfig(
            "vocabulary sizes must be at least 1".into(),
        ));
    }
    let embeddings: Vec<EmbeddingSpec> = vocabs
        .iter()
        .map(|&vocab| EmbeddingSpec {
            vocab,
            dim: cfg.embedding_dim,
        })
        .collect();

    let mut emb_layers = Vec::new();
    let mut width = cfg.embedding_dim * vocabs.len();
    for &out in &cfg.encoder_hidden {
        emb_layers.push(LayerSpec {
            input: width,
            output: out,
            relu: true,
            dropout: cfg.dropout,
            batch_norm: false,
        });
        width = out;
    }
    emb_layers.push(LayerSpec::linear(width, ENCODING_WIDTH));

    let mut fc_layers = Vec::new();
    let mut width = ENCODING_WIDTH + n_numeric;
    for &out in &cfg.head_hidden {
        fc_layers.push(LayerSpec {
            input: width,
            output: out,
            relu: true,
            dropout: cfg.dropout,
            batch_norm: true,
        });
        width = out;
    }
    fc_layers.push(LayerSpec::linear(width, THETA_WIDTH));

    let arch = NetworkArch {
        embeddings,
        emb_layers,
        fc_layers,
        n_numeric,
        bn_momentum: cfg.bn_momentum,
        bn_eps: cfg.bn_eps,
    };
    arch.validate()?;
    Ok(arch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    /// Learning-rate factor applied after each epoch.
    pub lr_decay: f64,
    /// Share of the latest days held out for validation.
    pub validation_fraction: f64,
    /// Share of training rows whose item id is relabelled to the unknown id.
    pub unknown_fraction: f64,
    pub target_space: TargetSpace,
    pub arch: ArchConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 5,
            base_lr: 1e-3,
            lr_decay: 0.5,
            validation_fraction: 0.1,
            unknown_fraction: 0.02,
            target_space: TargetSpace::LogLog,
            arch: ArchConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.unknown_fraction) {
            return bad("unknown_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.arch.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Parameters of the linear demand head `q = alpha + beta * p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandTheta {
    pub alpha: f64,
    pub beta: f64,
}

impl DemandTheta {
    pub fn demand(&self, price: f64) -> f64 {
        self.alpha + self.beta * price
    }
}

/// `beta * p / (alpha + beta * p)`; undefined when predicted demand is not positive.
pub fn point_elasticity(theta: DemandTheta, price: f64) -> Result<f64> {
    let q = theta.demand(price);
    if !(q > 0.0) {
        return Err(Error::UndefinedElasticity { quantity: q });
    }
    Ok(theta.beta * price / q)
}
