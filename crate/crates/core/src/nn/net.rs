//! Forward pass with a recorded tape, reverse-mode backward, and the
//! structural loss of the linear demand head.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::arch::{LayerSpec, NetworkArch, THETA_WIDTH};
use super::params::{DenseParams, Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch-norm on batch statistics.
    Train,
    /// Dropout is the identity, batch-norm on running statistics.
    Eval,
}

/// Network inputs. Prices are deliberately not part of this type.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    /// One index vector per categorical field, each of length `n`.
    pub categorical: Vec<Vec<usize>>,
    /// `n x n_numeric`.
    pub numeric: DMatrix<f64>,
}

impl Inputs {
    pub fn len(&self) -> usize {
        self.numeric.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx` of every input block.
    pub fn select(&self, idx: &[usize]) -> Inputs {
        Inputs {
            categorical: self
                .categorical
                .iter()
                .map(|col| idx.iter().map(|&i| col[i]).collect())
                .collect(),
            numeric: self.numeric.select_rows(idx),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Inputs,
    pub prices: DVector<f64>,
    pub quantities: DVector<f64>,
}

impl Batch {
    pub fn new(inputs: Inputs, prices: DVector<f64>, quantities: DVector<f64>) -> Result<Self> {
        let n = inputs.len();
        for col in &inputs.categorical {
            if col.len() != n {
                return Err(Error::dims("categorical rows", n, col.len()));
            }
        }
        if prices.len() != n {
            return Err(Error::dims("price rows", n, prices.len()));
        }
        if quantities.len() != n {
            return Err(Error::dims("quantity rows", n, quantities.len()));
        }
        Ok(Self {
            inputs,
            prices,
            quantities,
        })
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select(idx),
            prices: self.prices.select_rows(idx),
            quantities: self.quantities.select_rows(idx),
        }
    }
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: DMatrix<f64>,
    inv_std: DVector<f64>,
    batch_mean: DVector<f64>,
    batch_var_unbiased: DVector<f64>,
    train: bool,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: DMatrix<f64>,
    bn: Option<BnCache>,
    /// Output after batch norm, before the rectifier.
    pre_activation: DMatrix<f64>,
    /// Inverted-dropout multipliers (0 or `1/(1-rate)`).
    dropout_mask: Option<DMatrix<f64>>,
}

/// Intermediates recorded by [`forward`] for [`backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    categorical: Vec<Vec<usize>>,
    emb_layers: Vec<LayerCache>,
    fc_layers: Vec<LayerCache>,
    encoding_width: usize,
}

impl Tape {
    /// `(mean, unbiased variance)` of every train-mode batch-norm layer, in
    /// layer order.
    pub fn batch_stats(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        self.emb_layers
            .iter()
            .chain(&self.fc_layers)
            .filter_map(|c| c.bn.as_ref())
            .filter(|bn| bn.train)
            .map(|bn| (bn.batch_mean.clone(), bn.batch_var_unbiased.clone()))
            .collect()
    }

    /// Batch-norm input normalised by batch statistics, for layer `i` of the head.
    pub fn head_normalized(&self, i: usize) -> Option<&DMatrix<f64>> {
        self.fc_layers.get(i)?.bn.as_ref().map(|bn| &bn.xhat)
    }

    /// Whether each rectified pre-activation is positive, over layers in order.
    pub fn activation_pattern(&self, arch: &NetworkArch) -> Vec<bool> {
        self.emb_layers
            .iter()
            .zip(&arch.emb_layers)
            .chain(self.fc_layers.iter().zip(&arch.fc_layers))
            .filter(|(_, spec)| spec.relu)
            .flat_map(|(c, _)| c.pre_activation.iter().map(|v| *v > 0.0))
            .collect()
    }
}

fn add_bias(z: &mut DMatrix<f64>, bias: &DVector<f64>) {
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(bias[j]);
    }
}

fn layer_forward<R: Rng + ?Sized>(
    spec: &LayerSpec,
    p: &DenseParams,
    input: DMatrix<f64>,
    mode: Mode,
    bn_eps: f64,
    rng: &mut R,
) -> (DMatrix<f64>, LayerCache) {
    let n = input.nrows();
    let mut z = &input * &p.weight;
    add_bias(&mut z, &p.bias);

    let mut bn_cache = None;
    if let Some(bn) = &p.bn {
        let width = z.ncols();
        let mut xhat = DMatrix::zeros(n, width);
        let mut inv_std = DVector::zeros(width);
        let mut batch_mean = DVector::zeros(width);
        let mut batch_var_unbiased = DVector::zeros(width);
        for j in 0..width {
            let col = z.column(j);
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = col.mean();
                    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
                    batch_var_unbiased[j] = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
                    (mean, ss / n as f64)
                }
                Mode::Eval => (bn.running_mean[j], bn.running_var[j]),
            };
            batch_mean[j] = mean;
            let is = 1.0 / (var + bn_eps).sqrt();
            inv_std[j] = is;
            for i in 0..n {
                let xh = (z[(i, j)] - mean) * is;
                xhat[(i, j)] = xh;
                z[(i, j)] = bn.scale[j] * xh + bn.shift[j];
            }
        }
        bn_cache = Some(BnCache {
            xhat,
            inv_std,
            batch_mean,
            batch_var_unbiased,
            train: mode == Mode::Train,
        });
    }

    let pre_activation = z.clone();
    if spec.relu {
        z.apply(|v| *v = v.max(0.0));
    }
    let mut dropout_mask = None;
    if mode == Mode::Train && spec.dropout > 0.0 {
        let keep = 1.0 - spec.dropout;
        let mask = DMatrix::from_fn(n, z.ncols(), |_, _| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        z.component_mul_assign(&mask);
        dropout_mask = Some(mask);
    }
    (
        z,
        LayerCache {
            input,
            bn: bn_cache,
            pre_activation,
            dropout_mask,
        },
    )
}

/// Parameter gradients of one layer and the gradient w.r.t. its input.
fn layer_backward(
    spec: &LayerSpec,
    p: &DenseParams,
    cache: &LayerCache,
    mut grad: DMatrix<f64>,
) -> (DenseParams, DMatrix<f64>) {
    if let Some(mask) = &cache.dropout_mask {
        grad.component_mul_assign(mask);
    }
    if spec.relu {
        grad.zip_apply(&cache.pre_activation, |g, pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
    }
    let mut grads = DenseParams {
        weight: DMatrix::zeros(0, 0),
        bias: DVector::zeros(0),
        bn: None,
    };
    if let (Some(bn), Some(c)) = (&p.bn, &cache.bn) {
        let n = grad.nrows();
        let width = grad.ncols();
        let mut dscale = DVector::zeros(width);
        let mut dshift = DVector::zeros(width);
        let mut dz = DMatrix::zeros(n, width);
        for j in 0..width {
            let dy = grad.column(j);
            let xh = c.xhat.column(j);
            dshift[j] = dy.sum();
            dscale[j] = dy.dot(&xh);
            let gamma = bn.scale[j];
            if c.train {
                // d xhat = gamma dy; dz = inv_std/n (n dxh - sum dxh - xhat sum(dxh xhat))
                let sum_dxh = gamma * dshift[j];
                let sum_dxh_xh = gamma * dscale[j];
                let k = c.inv_std[j] / n as f64;
                for i in 0..n {
                    dz[(i, j)] = k * (n as f64 * gamma * dy[i] - sum_dxh - xh[i] * sum_dxh_xh);
                }
            } else {
                for i in 0..n {
                    dz[(i, j)] = gamma * dy[i] * c.inv_std[j];
                }
            }
        }
        grads.bn = Some(super::params::BatchNormParams {
            scale: dscale,
            shift: dshift,
            running_mean: DVector::zeros(width),
            running_var: DVector::zeros(width),
        });
        grad = dz;
    }
    grads.weight = cache.input.transpose() * &grad;
    grads.bias = DVector::from_iterator(grad.ncols(), grad.column_iter().map(|c| c.sum()));
    let d_input = &grad * p.weight.transpose();
    (grads, d_input)
}

/// Runs both subnetworks. Row `i` of the result is `(alpha_i, beta_i)`.
pub fn forward<R: Rng + ?Sized>(
    arch: &NetworkArch,
    params: &NetworkParams,
    inputs: &Inputs,
    mode: Mode,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Tape)> {
    let n = inputs.len();
    if inputs.categorical.len() != arch.embeddings.len() {
        return Err(Error::dims(
            "categorical fields",
            arch.embeddings.len(),
            inputs.categorical.len(),
        ));
    }
    if inputs.numeric.ncols() != arch.n_numeric {
        return Err(Error::dims(
            "numeric columns",
            arch.n_numeric,
            inputs.numeric.ncols(),
        ));
    }
    if params.fc_layers.len() != arch.fc_layers.len()
        || params.emb_layers.len() != arch.emb_layers.len()
        || params.embeddings.len() != arch.embeddings.len()
    {
        return Err(Error::TapeMismatch(
            "parameter layer count differs from arch".into(),
        ));
    }

    let lookup_width = arch.lookup_width();
    let mut lookup = DMatrix::zeros(n, lookup_width);
    let mut offset = 0;
    for (field, (spec, table)) in arch.embeddings.iter().zip(&params.embeddings).enumerate() {
        let idx = &inputs.categorical[field];
        if idx.len() != n {
            return Err(Error::dims("categorical rows", n, idx.len()));
        }
        for (i, &v) in idx.iter().enumerate() {
            if v >= spec.vocab {
                return Err(Error::OutOfVocabulary {
                    field,
                    index: v,
                    vocab: spec.vocab,
                });
            }
            for d in 0..spec.dim {
                lookup[(i, offset + d)] = table[(v, d)];
            }
        }
        offset += spec.dim;
    }

    let mut h = lookup;
    let mut emb_caches = Vec::with_capacity(arch.emb_layers.len());
    for (spec, p) in arch.emb_layers.iter().zip(&params.emb_layers) {
        let (out, cache) = layer_forward(spec, p, h, mode, arch.bn_eps, rng);
        emb_caches.push(cache);
        h = out;
    }
    let encoding_width = h.ncols();

    let mut x = DMatrix::zeros(n, encoding_width + arch.n_numeric);
    x.columns_mut(0, encoding_width).copy_from(&h);
    x.columns_mut(encoding_width, arch.n_numeric)
        .copy_from(&inputs.numeric);

    let mut fc_caches = Vec::with_capacity(arch.fc_layers.len());
    for (spec, p) in arch.fc_layers.iter().zip(&params.fc_layers) {
        let (out, cache) = layer_forward(spec, p, x, mode, arch.bn_eps, rng);
        fc_caches.push(cache);
        x = out;
    }
    debug_assert_eq!(x.ncols(), THETA_WIDTH);
    Ok((
        x,
        Tape {
            categorical: inputs.categorical.clone(),
            emb_layers: emb_caches,
            fc_layers: fc_caches,
            encoding_width,
        },
    ))
}

/// Reverse pass. Embedding rows not touched by the batch get zero gradient;
/// repeated indices accumulate.
pub fn backward(
    arch: &NetworkArch,
    params: &NetworkParams,
    tape: &Tape,
    theta_grad: &DMatrix<f64>,
) -> Result<Gradients> {
    if tape.fc_layers.len() != params.fc_layers.len()
        || tape.emb_layers.len() != params.emb_layers.len()
        || tape.categorical.len() != params.embeddings.len()
    {
        return Err(Error::TapeMismatch("layer counts differ".into()));
    }
    let n = tape.fc_layers.first().map_or(0, |c| c.input.nrows());
    if theta_grad.nrows() != n || theta_grad.ncols() != THETA_WIDTH {
        return Err(Error::TapeMismatch(format!(
            "theta gradient is {}x{}, tape batch is {n}x{THETA_WIDTH}",
            theta_grad.nrows(),
            theta_grad.ncols()
        )));
    }
    for (cache, p) in tape
        .emb_layers
        .iter()
        .chain(&tape.fc_layers)
        .zip(params.emb_layers.iter().chain(&params.fc_layers))
    {
        if cache.input.ncols() != p.weight.nrows() || cache.bn.is_some() != p.bn.is_some() {
            return Err(Error::TapeMismatch("layer shapes differ".into()));
        }
    }

    let mut grads = params.zeros_like();
    let mut g = theta_grad.clone();
    for (i, (spec, p)) in arch
        .fc_layers
        .iter()
        .zip(&params.fc_layers)
        .enumerate()
        .rev()
    {
        let (lg, d_in) = layer_backward(spec, p, &tape.fc_layers[i], g);
        grads.fc_layers[i] = lg;
        g = d_in;
    }
    let mut g = g.columns(0, tape.encoding_width).into_owned();
    for (i, (spec, p)) in arch
        .emb_layers
        .iter()
        .zip(&params.emb_layers)
        .enumerate()
        .rev()
    {
        let (lg, d_in) = layer_backward(spec, p, &tape.emb_layers[i], g);
        grads.emb_layers[i] = lg;
        g = d_in;
    }
    let mut offset = 0;
    for (field, spec) in arch.embeddings.iter().enumerate() {
        let table = &mut grads.embeddings[field];
        for (i, &v) in tape.categorical[field].iter().enumerate() {
            for d in 0..spec.dim {
                table[(v, d)] += g[(i, offset + d)];
            }
        }
        offset += spec.dim;
    }
    Ok(grads)
}

/// Mean squared error of the linear demand head `alpha + beta * price`
/// against observed quantities, with its gradient w.r.t. theta.
pub fn structural_loss(
    theta: &DMatrix<f64>,
    prices: &DVector<f64>,
    quantities: &DVector<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let n = theta.nrows();
    if theta.ncols() != THETA_WIDTH {
        return Err(Error::dims("theta columns", THETA_WIDTH, theta.ncols()));
    }
    if prices.len() != n {
        return Err(Error::dims("price rows", n, prices.len()));
    }
    if quantities.len() != n {
        return Err(Error::dims("quantity rows", n, quantities.len()));
    }
    if n == 0 {
        return Err(Error::EmptyInput("structural loss batch"));
    }
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(n, THETA_WIDTH);
    let scale = 2.0 / n as f64;
    for i in 0..n {
        let r = theta[(i, 0)] + theta[(i, 1)] * prices[i] - quantities[i];
        loss += r * r;
        grad[(i, 0)] = scale * r;
        grad[(i, 1)] = scale * r * prices[i];
    }
    Ok((loss / n as f64, grad))
}
