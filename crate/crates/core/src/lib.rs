//! In-network learning: per-node neural networks trained jointly over a
//! capacity-annotated DAG, with tooling for the information-theoretic rate
//! region and bandwidth comparisons against federated and split learning.

pub mod baselines;
pub mod data;
pub mod error;
pub mod graph;
pub mod info;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use graph::DagNetwork;
pub use tensor::Tensor;
