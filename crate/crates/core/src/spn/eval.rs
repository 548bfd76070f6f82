//! Bottom-up evaluation and top-down differentiation in log space.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_validity, Evidence, Node, NodeId, SpnGraph};
use crate::logspace::{self, log_add_exp, LOG_ONE, LOG_ZERO};
use crate::{Error, Result};

/// Log value of every node after one upward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub values: Vec<f64>,
    /// Number of node evaluations performed.
    pub visits: usize,
}

impl Forward {
    pub fn root_values(&self, g: &SpnGraph) -> Vec<f64> {
        g.roots().iter().map(|r| self.values[r.0]).collect()
    }
}

pub fn forward(g: &SpnGraph, evidence: &Evidence, interface: &[f64]) -> Result<Forward> {
    let mut values = Vec::new();
    let visits = forward_into(g, evidence, interface, &mut values)?;
    Ok(Forward { values, visits })
}

/// Upward pass into a caller-owned buffer; returns the number of visits.
pub fn forward_into(
    g: &SpnGraph,
    evidence: &Evidence,
    interface: &[f64],
    values: &mut Vec<f64>,
) -> Result<usize> {
    if evidence.len() != g.n_vars() {
        return Err(Error::EvidenceWidth { expected: g.n_vars(), got: evidence.len() });
    }
    if interface.len() != g.n_interface_inputs() {
        return Err(Error::InterfaceArity { expected: g.n_interface_inputs(), got: interface.len() });
    }
    values.clear();
    values.resize(g.len(), LOG_ZERO);
    let log_w = g.log_weights();
    let mut visits = 0;
    for &id in g.order() {
        visits += 1;
        let v = match g.node(id) {
            Node::Indicator { var, value } => match evidence.get(*var) {
                Some(obs) if obs != *value => LOG_ZERO,
                _ => LOG_ONE,
            },
            Node::InterfaceInput { slot } => interface[*slot],
            Node::Product { children } => children.iter().map(|c| values[c.0]).sum(),
            Node::Sum { children, .. } => {
                let w = &log_w[g.edge_offset(id)..];
                let mut max = LOG_ZERO;
                for (c, lw) in children.iter().zip(w) {
                    max = max.max(lw + values[c.0]);
                }
                if max == LOG_ZERO {
                    LOG_ZERO
                } else {
                    let s: f64 = children
                        .iter()
                        .zip(w)
                        .map(|(c, lw)| lw + values[c.0])
                        .filter(|&x| x != LOG_ZERO)
                        .map(|x| logspace::exp(x - max))
                        .sum();
                    max + logspace::ln(s)
                }
            }
        };
        values[id.0] = v;
    }
    Ok(visits)
}

/// Log value of each root.
pub fn evaluate(g: &SpnGraph, evidence: &Evidence, interface: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(g, evidence, interface)?.root_values(g))
}

/// [`evaluate`] preceded by a completeness/decomposability check. Interface
/// inputs are given one shared abstract scope.
pub fn evaluate_strict(g: &SpnGraph, evidence: &Evidence, interface: &[f64]) -> Result<Vec<f64>> {
    let scopes = vec![super::Scope::atom(0); g.n_interface_inputs()];
    if !check_validity(g, &scopes)?.is_valid() {
        return Err(Error::InvalidGraph);
    }
    evaluate(g, evidence, interface)
}

/// `Pr(query | given)` as the ratio of two upward passes.
pub fn conditional_query(g: &SpnGraph, query: &Evidence, given: &Evidence) -> Result<f64> {
    if g.n_interface_inputs() != 0 {
        return Err(Error::InterfaceInputsPresent);
    }
    let joint = query.union(given)?;
    joint.validate(g.arities())?;
    let root = *g.roots().first().ok_or(Error::BadRoot(0))?;
    let num = forward(g, &joint, &[])?.values[root.0];
    let den = forward(g, given, &[])?.values[root.0];
    if den == LOG_ZERO {
        return Err(Error::ZeroEvidence);
    }
    Ok(logspace::exp(num - den))
}

/// Log partial derivative of the (linear-domain) output with respect to
/// every node value. `root_grads[i]` seeds root `i`; a single root seeded with
/// [`LOG_ONE`] yields `log dS/dv`.
pub fn backward(g: &SpnGraph, values: &[f64], root_grads: &[f64]) -> Vec<f64> {
    let mut grads = Vec::new();
    let mut scratch = Vec::new();
    backward_into(g, values, root_grads, &mut grads, &mut scratch);
    grads
}

pub fn backward_into(
    g: &SpnGraph,
    values: &[f64],
    root_grads: &[f64],
    grads: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    grads.clear();
    grads.resize(g.len(), LOG_ZERO);
    for (r, &d) in g.roots().iter().zip(root_grads) {
        grads[r.0] = log_add_exp(grads[r.0], d);
    }
    let log_w = g.log_weights();
    for &id in g.order().iter().rev() {
        let d = grads[id.0];
        if d == LOG_ZERO {
            continue;
        }
        match g.node(id) {
            Node::Sum { children, .. } => {
                let w = &log_w[g.edge_offset(id)..];
                for (c, lw) in children.iter().zip(w) {
                    grads[c.0] = log_add_exp(grads[c.0], lw + d);
                }
            }
            Node::Product { children } => {
                // Product of the siblings via suffix sums, so a zero-valued
                // child still receives a finite derivative.
                scratch.clear();
                scratch.resize(children.len() + 1, 0.0);
                for j in (0..children.len()).rev() {
                    scratch[j] = scratch[j + 1] + values[children[j].0];
                }
                let mut prefix = 0.0;
                for (j, c) in children.iter().enumerate() {
                    let others = prefix + scratch[j + 1];
                    grads[c.0] = log_add_exp(grads[c.0], d + others);
                    prefix += values[c.0];
                }
            }
            _ => {}
        }
    }
}

/// Visits every sum-node edge with `(edge index, node, child, log w, log d_node, log v_child)`.
pub fn for_each_edge<F>(g: &SpnGraph, values: &[f64], grads: &[f64], mut f: F)
where
    F: FnMut(usize, NodeId, NodeId, f64, f64, f64),
{
    let log_w = g.log_weights();
    for id in g.node_ids() {
        if let Node::Sum { children, .. } = g.node(id) {
            let off = g.edge_offset(id);
            for (j, c) in children.iter().enumerate() {
                f(off + j, id, *c, log_w[off + j], grads[id.0], values[c.0]);
            }
        }
    }
}
