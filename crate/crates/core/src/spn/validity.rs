use alloc::vec::Vec;

use super::{compute_scopes, Node, NodeId, Scope, SpnGraph};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Sum node whose children `a` and `b` have different scopes.
    Incomplete { node: NodeId, a: NodeId, b: NodeId },
    /// Product node whose children `a` and `b` share part of their scope.
    NotDecomposable { node: NodeId, a: NodeId, b: NodeId },
}

impl Violation {
    pub fn node(&self) -> NodeId {
        match *self {
            Violation::Incomplete { node, .. } | Violation::NotDecomposable { node, .. } => node,
        }
    }
}

/// One entry per incomplete sum node and per non-decomposable product node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn flagged_nodes(&self) -> Vec<NodeId> {
        self.violations.iter().map(Violation::node).collect()
    }
}

pub fn check_validity(g: &SpnGraph, input_scopes: &[Scope]) -> Result<ValidityReport> {
    let scopes = compute_scopes(g, input_scopes)?;
    Ok(validity_from_scopes(g, &scopes))
}

/// Completeness / decomposability from precomputed scopes, linear in the
/// number of edges times the bitset width.
pub fn validity_from_scopes(g: &SpnGraph, scopes: &[Scope]) -> ValidityReport {
    let mut violations = Vec::new();
    for id in g.node_ids() {
        match g.node(id) {
            Node::Sum { children, .. } => {
                let first = children[0];
                if let Some(&b) = children[1..].iter().find(|c| scopes[c.0] != scopes[first.0]) {
                    violations.push(Violation::Incomplete { node: id, a: first, b });
                }
            }
            Node::Product { children } => {
                let mut seen = Scope::empty();
                for (j, &c) in children.iter().enumerate() {
                    if scopes[c.0].intersects(&seen) {
                        let a = children[..j]
                            .iter()
                            .copied()
                            .find(|p| scopes[p.0].intersects(&scopes[c.0]))
                            .unwrap_or(children[0]);
                        violations.push(Violation::NotDecomposable { node: id, a, b: c });
                        break;
                    }
                    seen.union_with(&scopes[c.0]);
                }
            }
            _ => {}
        }
    }
    ValidityReport { violations }
}
