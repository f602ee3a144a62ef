#![allow(dead_code)]

use demand_bench::nn::{
    backward, forward, init_params, structural_loss, Batch, EmbeddingSpec, Inputs, LayerSpec, Mode,
    NetworkArch, NetworkParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small network with every layer kind: two embedding fields, rectified
/// encoder, batch-normalised head.
pub fn toy_network(dropout: f64, seed: u64) -> (NetworkArch, NetworkParams) {
    let dense = |input, output, bn| LayerSpec {
        input,
        output,
        relu: true,
        dropout,
        batch_norm: bn,
    };
    let arch = NetworkArch {
        embeddings: vec![
            EmbeddingSpec { vocab: 3, dim: 2 },
            EmbeddingSpec { vocab: 4, dim: 2 },
        ],
        emb_layers: vec![dense(4, 5, false), dense(5, 3, false)],
        fc_layers: vec![
            dense(5, 4, true),
            dense(4, 3, true),
            LayerSpec::linear(3, 2),
        ],
        n_numeric: 2,
        bn_momentum: 0.1,
        bn_eps: 1e-5,
    };
    arch.validate().unwrap();
    let mut params = init_params(&arch, seed);
    jitter_biases(&mut params, seed);
    (arch, params)
}

/// Small positive biases and batch-norm shifts keep pre-activations off the rectifier kink at
/// exactly zero, where finite differences see half a slope.
pub fn jitter_biases(params: &mut NetworkParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
    for layer in params
        .emb_layers
        .iter_mut()
        .chain(params.fc_layers.iter_mut())
    {
        layer.bias.apply(|b| *b = rng.random_range(0.05..0.15));
        if let Some(bn) = layer.bn.as_mut() {
            bn.shift.apply(|b| *b = rng.random_range(0.05..0.15));
        }
    }
}

fn loss(arch: &NetworkArch, params: &NetworkParams, batch: &Batch, mode: Mode) -> (f64, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (theta, tape) = forward(arch, params, &batch.inputs, mode, &mut rng).unwrap();
    let l = structural_loss(&theta, &batch.prices, &batch.quantities)
        .unwrap()
        .0;
    (l, tape.activation_pattern(arch))
}

/// Largest relative error between the analytic gradient and five-point
/// central differences over every trainable scalar. The denominator is floored
/// at 1e-3 so vanishing entries are judged on absolute error. Coordinates whose
/// stencil flips the sign of any pre-activation straddle a rectifier kink and
/// are skipped; under batch norm one such unit moves a whole weight column. At
/// least half of all coordinates must be checked.
pub fn fd_gradient_check(
    arch: &NetworkArch,
    params: &NetworkParams,
    batch: &Batch,
    mode: Mode,
) -> f64 {
    assert!(arch
        .emb_layers
        .iter()
        .chain(&arch.fc_layers)
        .all(|l| l.dropout == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (theta, tape) = forward(arch, params, &batch.inputs, mode, &mut rng).unwrap();
    let pattern = tape.activation_pattern(arch);
    let (_, d) = structural_loss(&theta, &batch.prices, &batch.quantities).unwrap();
    let grads = backward(arch, params, &tape, &d).unwrap();
    let analytic: Vec<Vec<f64>> = grads.trainable().iter().map(|t| t.to_vec()).collect();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0usize, 0usize);
    let mut work = params.clone();
    for (k, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = work.trainable()[k][i];
            let mut kinked = false;
            let mut at = |x: f64| {
                work.trainable_mut()[k][i] = x;
                let (l, p) = loss(arch, &work, batch, mode);
                kinked |= p != pattern;
                l
            };
            let fd = (-at(orig + 2.0 * h) + 8.0 * at(orig + h) - 8.0 * at(orig - h)
                + at(orig - 2.0 * h))
                / (12.0 * h);
            work.trainable_mut()[k][i] = orig;
            if kinked {
                skipped += 1;
                continue;
            }
            checked += 1;
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(
        skipped <= checked,
        "{skipped} of {} coordinates straddle a kink",
        checked + skipped
    );
    worst
}

/// Random pricing problem with up to three products; half of the draws carry
/// an overall margin target.
pub fn random_pricing_problem(
    rng: &mut ChaCha8Rng,
    n_products: usize,
) -> demand_bench::optimizer::PricingProblem {
    use demand_bench::ml::DemandTheta;
    use demand_bench::optimizer::{PricingProblem, ProductTerms};
    let products = (0..n_products)
        .map(|i| {
            let lb = rng.random_range(0.0..0.3);
            ProductTerms {
                product_id: i as u32,
                theta: DemandTheta {
                    alpha: rng.random_range(5.0..30.0),
                    beta: rng.random_range(-4.0..-0.5),
                },
                cost: rng.random_range(0.5..3.0),
                margin_lb: lb,
                margin_ub: (lb + rng.random_range(0.2..0.6)).min(0.95),
            }
        })
        .collect();
    let margin_target = rng.random_bool(0.5).then(|| rng.random_range(0.2..0.7));
    PricingProblem {
        products,
        margin_target,
        price_cap: None,
    }
}

/// Random inputs, prices and quantities for `arch`.
pub fn random_batch(arch: &NetworkArch, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categorical = arch
        .embeddings
        .iter()
        .map(|e| (0..n).map(|_| rng.random_range(0..e.vocab)).collect())
        .collect();
    let numeric = DMatrix::from_fn(n, arch.n_numeric, |_, _| rng.random_range(-1.0..1.0));
    let prices = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    let quantities = DVector::from_fn(n, |_, _| rng.random_range(-1.0..2.0));
    Batch::new(
        Inputs {
            categorical,
            numeric,
        },
        prices,
        quantities,
    )
    .unwrap()
}

pub fn arch_with(
    embeddings: Vec<EmbeddingSpec>,
    emb: Vec<LayerSpec>,
    fc: Vec<LayerSpec>,
    n_numeric: usize,
) -> NetworkArch {
    let arch = NetworkArch {
        embeddings,
        emb_layers: emb,
        fc_layers: fc,
        n_numeric,
        bn_momentum: 0.1,
        bn_eps: 1e-5,
    };
    arch.validate().unwrap();
    arch
}

/// Dense layer without dropout.
pub fn layer(input: usize, output: usize, relu: bool, batch_norm: bool) -> LayerSpec {
    LayerSpec {
        input,
        output,
        relu,
        dropout: 0.0,
        batch_norm,
    }
}
