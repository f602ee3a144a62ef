//! Minimal reverse-mode kernel for the two fixed subnetworks of the
//! structural estimator: embedding lookups, dense layers with optional batch
//! normalisation, rectifiers and inverted dropout, the linear-demand MSE loss
//! and Adam with a step-decay schedule.

mod adam;
mod arch;
mod net;
mod params;
mod serialize;

pub use adam::{adam_step, lr_schedule, LrSchedule, OptimizerState};
pub use arch::{EmbeddingSpec, LayerSpec, NetworkArch, THETA_WIDTH};
pub use net::{backward, forward, structural_loss, Batch, Inputs, Mode, Tape};
pub use params::{init_params, BatchNormParams, DenseParams, Gradients, NetworkParams};
pub use serialize::{NamedTensor, NetworkSnapshot, SCHEMA_VERSION};
