use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{LayerSpec, NetworkArch};
use super::net::Tape;

/// Batch-norm affine parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub scale: DVector<f64>,
    pub shift: DVector<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
}

/// Dense layer parameters; `weight` is `input x output`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub bn: Option<BatchNormParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    /// One `vocab x dim` table per categorical field.
    pub embeddings: Vec<DMatrix<f64>>,
    pub emb_layers: Vec<DenseParams>,
    pub fc_layers: Vec<DenseParams>,
}

/// Gradients share the parameter layout. Running statistics are unused.
pub type Gradients = NetworkParams;

impl DenseParams {
    fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weight: DMatrix::zeros(spec.input, spec.output),
            bias: DVector::zeros(spec.output),
            bn: spec.batch_norm.then(|| BatchNormParams {
                scale: DVector::from_element(spec.output, 1.0),
                shift: DVector::zeros(spec.output),
                running_mean: DVector::zeros(spec.output),
                running_var: DVector::from_element(spec.output, 1.0),
            }),
        }
    }
}

impl NetworkParams {
    /// Zero weights and biases, unit batch-norm scale and running variance.
    pub fn zeros(arch: &NetworkArch) -> Self {
        Self {
            embeddings: arch
                .embeddings
                .iter()
                .map(|e| DMatrix::zeros(e.vocab, e.dim))
                .collect(),
            emb_layers: arch.emb_layers.iter().map(DenseParams::zeros).collect(),
            fc_layers: arch.fc_layers.iter().map(DenseParams::zeros).collect(),
        }
    }

    /// All-zero tensors with the same shapes, including batch-norm slots.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.trainable_mut() {
            t.fill(0.0);
        }
        for bn in out.batch_norms_mut() {
            bn.running_mean.fill(0.0);
            bn.running_var.fill(0.0);
        }
        out
    }

    /// Trainable tensors in a fixed order: embedding tables, then for every
    /// dense layer (encoder first) weight, bias, and batch-norm scale/shift.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.embeddings.iter().map(|e| e.as_slice()).collect();
        for layer in self.emb_layers.iter().chain(&self.fc_layers) {
            out.push(layer.weight.as_slice());
            out.push(layer.bias.as_slice());
            if let Some(bn) = &layer.bn {
                out.push(bn.scale.as_slice());
                out.push(bn.shift.as_slice());
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .embeddings
            .iter_mut()
            .map(|e| e.as_mut_slice())
            .collect();
        for layer in self.emb_layers.iter_mut().chain(self.fc_layers.iter_mut()) {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
            if let Some(bn) = &mut layer.bn {
                out.push(bn.scale.as_mut_slice());
                out.push(bn.shift.as_mut_slice());
            }
        }
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNormParams> {
        self.emb_layers
            .iter_mut()
            .chain(self.fc_layers.iter_mut())
            .filter_map(|l| l.bn.as_mut())
    }

    /// Folds the batch statistics recorded by a train-mode forward into the
    /// running estimates: `running = (1 - m) running + m batch`. The variance
    /// update uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, tape: &Tape, momentum: f64) {
        let stats = tape.batch_stats();
        for (bn, (mean, var)) in self.batch_norms_mut().zip(stats) {
            bn.running_mean = &bn.running_mean * (1.0 - momentum) + mean * momentum;
            bn.running_var = &bn.running_var * (1.0 - momentum) + var * momentum;
        }
    }
}

/// Fan-in scaled uniform initialisation: dense weights ~ U(-1/sqrt(n), 1/sqrt(n))
/// for a layer with `n` inputs, embedding entries ~ U(-1, 1), zero biases,
/// unit batch-norm scale, zero shift.
pub fn init_params(arch: &NetworkArch, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(arch);
    for table in &mut params.embeddings {
        for v in table.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    for layer in params
        .emb_layers
        .iter_mut()
        .chain(params.fc_layers.iter_mut())
    {
        let bound = (1.0 / layer.weight.nrows() as f64).sqrt();
        for w in layer.weight.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::EmbeddingSpec;

    fn arch() -> NetworkArch {
        NetworkArch {
            embeddings: vec![EmbeddingSpec { vocab: 5, dim: 3 }],
            emb_layers: vec![LayerSpec {
                input: 3,
                output: 8,
                relu: true,
                dropout: 0.1,
                batch_norm: false,
            }],
            fc_layers: vec![
                LayerSpec {
                    input: 10,
                    output: 6,
                    relu: true,
                    dropout: 0.1,
                    batch_norm: true,
                },
                LayerSpec::linear(6, 2),
            ],
            n_numeric: 2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = arch();
        let p = init_params(&a, 11);
        assert_eq!(p, init_params(&a, 11));
        assert_ne!(p, init_params(&a, 12));
        for layer in p.emb_layers.iter().chain(&p.fc_layers) {
            let bound = (1.0 / layer.weight.nrows() as f64).sqrt();
            assert!(layer.weight.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|b| *b == 0.0));
            if let Some(bn) = &layer.bn {
                assert!(bn.scale.iter().all(|s| *s == 1.0));
                assert!(bn.shift.iter().all(|s| *s == 0.0));
                assert!(bn.running_var.iter().all(|s| *s > 0.0));
            }
        }
    }

    #[test]
    fn trainable_layout() {
        let p = init_params(&arch(), 0);
        // table, (w, b) encoder, (w, b, scale, shift) head, (w, b) output
        assert_eq!(p.trainable().len(), 1 + 2 + 4 + 2);
        assert_eq!(p.n_trainable(), 15 + 24 + 8 + 60 + 6 + 12 + 12 + 2);
        let z = p.zeros_like();
        assert!(z.trainable().iter().all(|t| t.iter().all(|v| *v == 0.0)));
    }
}
