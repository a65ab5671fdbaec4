//! Federated and split learning baselines, and the closed-form bandwidth
//! comparison.

pub mod bandwidth;
pub mod fl;
pub mod sl;
