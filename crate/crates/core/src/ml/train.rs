use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prep::Preprocessing;
use super::{build_architecture_with, DemandTheta, TrainConfig};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::market::SalesPanel;
use crate::nn::{
    adam_step, backward, forward, init_params, structural_loss, Batch, Inputs, LrSchedule, Mode,
    NetworkArch, NetworkParams, NetworkSnapshot, OptimizerState,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Row-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    /// Eval-mode loss on the held-out days after the epoch.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub steps: Vec<StepLoss>,
    pub epochs: Vec<EpochLoss>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub arch: NetworkArch,
    pub params: NetworkParams,
    pub prep: Preprocessing,
    pub history: LossHistory,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    network: NetworkSnapshot,
    prep: Preprocessing,
    history: LossHistory,
    config: TrainConfig,
}

impl TrainedModel {
    /// Eval-mode theta for the given rows, in model units.
    pub fn predict_rows(&self, table: &FeatureTable, rows: &[usize]) -> Result<Vec<DemandTheta>> {
        let inputs = self.prep.inputs(table, rows)?;
        self.predict_inputs(&inputs)
    }

    pub fn predict_theta(&self, table: &FeatureTable) -> Result<Vec<DemandTheta>> {
        let rows: Vec<usize> = (0..table.len()).collect();
        self.predict_rows(table, &rows)
    }

    fn predict_inputs(&self, inputs: &Inputs) -> Result<Vec<DemandTheta>> {
        // eval mode never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (theta, _) = forward(&self.arch, &self.params, inputs, Mode::Eval, &mut rng)?;
        Ok(theta
            .row_iter()
            .map(|r| DemandTheta {
                alpha: r[0],
                beta: r[1],
            })
            .collect())
    }

    /// One elasticity per product: theta averaged over the product's rows,
    /// evaluated at the product's mean price.
    pub fn product_elasticities(&self, table: &FeatureTable) -> Result<BTreeMap<u32, f64>> {
        let thetas = self.predict_theta(table)?;
        let mut acc: BTreeMap<u32, (f64, f64, f64, usize)> = BTreeMap::new();
        for (row, theta) in table.rows.iter().zip(&thetas) {
            let e = acc.entry(row.product_id).or_default();
            e.0 += theta.alpha;
            e.1 += theta.beta;
            e.2 += row.price;
            e.3 += 1;
        }
        acc.into_iter()
            .map(|(p, (a, b, price, n))| {
                let n = n as f64;
                let theta = DemandTheta {
                    alpha: a / n,
                    beta: b / n,
                };
                Ok((p, self.prep.elasticity(theta, price / n)?))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            network: NetworkSnapshot::capture(&self.arch, &self.params, None),
            prep: self.prep.clone(),
            history: self.history.clone(),
            config: self.config.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let params = file.network.params()?;
        Ok(Self {
            arch: file.network.arch,
            params,
            prep: file.prep,
            history: file.history,
            config: file.config,
        })
    }
}

/// Rows whose day falls in the last `fraction` of the panel's distinct days.
fn validation_split(table: &FeatureTable, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut days: Vec<u32> = table.rows.iter().map(|r| r.day).collect();
    days.sort_unstable();
    days.dedup();
    let n_val = (fraction * days.len() as f64).round() as usize;
    let n_val = n_val.min(days.len().saturating_sub(1));
    let cutoff = days[days.len() - n_val..]
        .first()
        .copied()
        .unwrap_or(u32::MAX);
    (0..table.len()).partition(|&i| table.rows[i].day < cutoff)
}

fn eval_loss(
    arch: &NetworkArch,
    params: &NetworkParams,
    inputs: &Inputs,
    prices: &DVector<f64>,
    quantities: &DVector<f64>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (theta, _) = forward(arch, params, inputs, Mode::Eval, &mut rng)?;
    Ok(structural_loss(&theta, prices, quantities)?.0)
}

/// Trains the structural network with shuffled minibatches and Adam.
///
/// The validation rows are the latest days; everything else trains. A small
/// random share of training rows has its item id replaced by the unknown id
/// so that id 0 carries a usable embedding at inference.
pub fn train(
    panel: &SalesPanel,
    features: &FeatureTable,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if panel.is_empty() || features.is_empty() {
        return Err(Error::EmptyInput("panel"));
    }
    features.check_aligned(panel)?;

    let (train_rows, val_rows) = validation_split(features, config.validation_fraction);
    if train_rows.is_empty() {
        return Err(Error::EmptyInput("training rows"));
    }
    let prep = Preprocessing::fit(features, &train_rows, config.target_space)?;
    let arch = build_architecture_with(&prep.vocabs, prep.n_numeric(), &config.arch)?;

    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xDA7A_5EED);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xD50F_F00D);

    let mut train_inputs = prep.inputs(features, &train_rows)?;
    for id in train_inputs.categorical[0].iter_mut() {
        if data_rng.random::<f64>() < config.unknown_fraction {
            *id = 0;
        }
    }
    let target = |rows: &[usize]| -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_iterator(
                rows.len(),
                rows.iter()
                    .map(|&i| prep.model_price(features.rows[i].price)),
            ),
            DVector::from_iterator(
                rows.len(),
                rows.iter()
                    .map(|&i| prep.model_quantity(features.rows[i].sales)),
            ),
        )
    };
    let (train_p, train_q) = target(&train_rows);
    let train_batch = Batch::new(train_inputs, train_p, train_q)?;
    let val = if val_rows.is_empty() {
        None
    } else {
        let (p, q) = target(&val_rows);
        Some((prep.inputs(features, &val_rows)?, p, q))
    };

    let mut params = init_params(&arch, config.seed);
    let n = train_rows.len();
    let steps_per_epoch = (n / config.batch_size + usize::from(n % config.batch_size >= 2)) as u64;
    let mut schedule = LrSchedule::new(config.base_lr, steps_per_epoch);
    schedule.decay = config.lr_decay;
    let mut opt = OptimizerState::new(&params, schedule);

    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut data_rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            // batch statistics need two rows
            if chunk.len() < 2 {
                continue;
            }
            let batch = train_batch.select(chunk);
            let (theta, tape) =
                forward(&arch, &params, &batch.inputs, Mode::Train, &mut dropout_rng)?;
            params.update_running_stats(&tape, arch.bn_momentum);
            let (loss, d_theta) = structural_loss(&theta, &batch.prices, &batch.quantities)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "training loss".into(),
                    row: opt.step as usize,
                });
            }
            let grads = backward(&arch, &params, &tape, &d_theta)?;
            adam_step(&mut params, &grads, &mut opt)?;
            history.steps.push(StepLoss {
                step: opt.step,
                epoch: epoch + 1,
                loss,
            });
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_loss = match &val {
            Some((inputs, p, q)) => Some(eval_loss(&arch, &params, inputs, p, q)?),
            None => None,
        };
        history.epochs.push(EpochLoss {
            epoch: epoch + 1,
            train_loss: total / seen.max(1) as f64,
            val_loss,
        });
    }

    Ok(TrainedModel {
        arch,
        params,
        prep,
        history,
        config: config.clone(),
    })
}

/// `step,epoch,train_loss,val_loss`: one row per optimizer step with the
/// batch loss; the validation loss is filled on the last step of each epoch.
pub fn write_loss_history_csv<W: Write>(history: &LossHistory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "epoch", "train_loss", "val_loss"])?;
    for (i, s) in history.steps.iter().enumerate() {
        let last_of_epoch = history
            .steps
            .get(i + 1)
            .is_none_or(|next| next.epoch != s.epoch);
        let val = if last_of_epoch {
            history
                .epochs
                .iter()
                .find(|e| e.epoch == s.epoch)
                .and_then(|e| e.val_loss)
                .map(|v| v.to_string())
                .unwrap_or_default()
        } else {
            String::new()
        };
        w.write_record([
            s.step.to_string(),
            s.epoch.to_string(),
            s.loss.to_string(),
            val,
        ])?;
    }
    w.flush()?;
    Ok(())
}
