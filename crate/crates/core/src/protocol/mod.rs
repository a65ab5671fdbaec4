//! In-network learning over a DAG of per-node networks.
//!
//! Forward: each node runs its own network on the concatenation of its
//! observation (sources only) and what its in-neighbours sent, in ascending
//! sender order. Backward: each node splits its input-layer error vector the
//! same way and sends every piece back to the node it came from.

pub mod checkpoint;
mod loss;
mod model;
pub mod monolithic;
mod pass;
mod train;

pub use loss::{hop_loss_5node, nll_output_delta, star_loss, weighted_objective, LatentState};
pub use model::{InlSystem, NodeModel, Objective, Role, SystemSpec};
pub use monolithic::{max_relative_error, MonolithicNet};
pub use pass::{BackwardOutput, Direction, ForwardOutput, Message, Noise};
pub use train::{
    epoch_batches, evaluate, first_reaching, metrics_csv, relevance, train, MetricsRow, Split, StepStats, TrainConfig,
    METRICS_HEADER,
};
