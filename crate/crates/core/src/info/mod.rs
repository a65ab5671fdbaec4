//! Discrete information-theoretic toolkit: Shannon quantities on small
//! alphabets, the achievable rate region, the five-node Lagrangian and its
//! lower bounds. Everything here is in bits.

pub mod fme;
mod lagrangian;
mod lemmas;
mod pmf;
mod region;

pub use lagrangian::{lagrangian_ls, prop1_curve, prop1_point, Prop1Point, MAX_GRID_POINTS};
pub use lemmas::{
    lower_bound_check, optimal_q, variational_bound_check, LowerBound, QSet, VariationalBound, BOUND_TOL,
};
pub use pmf::{
    binary_entropy, compose, entropy_of, Channel, ChannelFile, Composed, JointPmf, JointPmfFile, Pmf, MAX_ALPHABET,
    MAX_SOURCES, SUM_TOL,
};
pub use region::{
    achievable_relevance, five_node_region_check, five_node_terms_check, fme_equivalence_terms, fme_equivalence_test,
    sum_region_check, theorem1_feasible, theorem1_region, Constraint, Family, FiveNodeCapacities, FiveNodeTerms,
    FmeEquivalence, RateTuple, RegionVerdict, SumVerdict, Theorem1Verdict, EQUIVALENCE_TOL,
};
