//! Static sum-product networks.

mod eval;
mod evidence;
mod graph;
mod scope;
mod validity;

pub use eval::{
    backward, backward_into, conditional_query, evaluate, evaluate_strict, for_each_edge,
    forward, forward_into, Forward,
};
pub use evidence::Evidence;
pub use graph::{Node, NodeId, SpnBuilder, SpnGraph, NORMALIZATION_TOL};
pub use scope::{compute_scopes, BitSet, Scope};
pub use validity::{check_validity, validity_from_scopes, ValidityReport, Violation};
