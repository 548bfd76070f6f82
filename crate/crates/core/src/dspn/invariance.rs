//! Template invariance and the stacking validity premises.
//!
//! Interface inputs receive abstract atoms instead of concrete variable sets:
//! slots in the same class share one atom, slots in different classes get
//! different atoms. That realizes the "identical or disjoint" relation between
//! input scopes without naming the variables of earlier slices.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{DspnModel, TemplateNetwork};
use crate::spn::{compute_scopes, validity_from_scopes, Scope, SpnGraph, ValidityReport, Violation};
use crate::spn::NodeId;
use crate::Result;

/// Partition of the input slots into scope-equivalence classes, stored as a
/// canonical class label per slot (first occurrence order).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScopeAssignment {
    class_of: Vec<usize>,
}

impl ScopeAssignment {
    /// Every slot in one class.
    pub fn single(k: usize) -> Self {
        ScopeAssignment { class_of: vec![0; k] }
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let class_of = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        ScopeAssignment { class_of }
    }

    /// Classes induced by equality of the given scopes.
    pub fn from_scopes(scopes: &[Scope]) -> Self {
        let mut reps: Vec<&Scope> = Vec::new();
        let class_of = scopes
            .iter()
            .map(|s| match reps.iter().position(|r| *r == s) {
                Some(c) => c,
                None => {
                    reps.push(s);
                    reps.len() - 1
                }
            })
            .collect();
        ScopeAssignment { class_of }
    }

    pub fn class_of(&self, slot: usize) -> usize {
        self.class_of[slot]
    }

    pub fn classes(&self) -> &[usize] {
        &self.class_of
    }

    pub fn n_classes(&self) -> usize {
        self.class_of.iter().max().map_or(0, |m| m + 1)
    }

    pub fn k(&self) -> usize {
        self.class_of.len()
    }

    /// One atom per class, atom `atom_of[class]`.
    pub fn input_scopes_with(&self, atom_of: &[usize]) -> Vec<Scope> {
        self.class_of.iter().map(|&c| Scope::atom(atom_of[c])).collect()
    }

    pub fn input_scopes(&self) -> Vec<Scope> {
        let ids: Vec<usize> = (0..self.n_classes()).collect();
        self.input_scopes_with(&ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvarianceViolation {
    /// Input scopes neither identical nor disjoint.
    InputsOverlap { i: usize, j: usize },
    /// `scope(i) = scope(j)` differs from `scope(f(i)) = scope(f(j))`.
    EqualityNotPreserved { i: usize, j: usize },
    /// `scope(i) ∩ scope(j) = ∅` differs from the same test on the outputs.
    DisjointnessNotPreserved { i: usize, j: usize },
    Incomplete { node: NodeId, a: NodeId, b: NodeId },
    NotDecomposable { node: NodeId, a: NodeId, b: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvarianceReport {
    pub violations: Vec<InvarianceViolation>,
    /// Scope of the output feeding each slot of the next slice.
    pub output_scopes: Vec<Scope>,
}

impl InvarianceReport {
    pub fn is_invariant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the five invariance conditions of `t` under `a`. Slice variables
/// and atoms never collide, so input scopes exclude the current slice.
pub fn check_invariance(t: &TemplateNetwork, a: &ScopeAssignment) -> Result<InvarianceReport> {
    check_invariance_with(t, &a.input_scopes())
}

pub(crate) fn check_invariance_with(
    t: &TemplateNetwork,
    inputs: &[Scope],
) -> Result<InvarianceReport> {
    let g = t.graph();
    let scopes = compute_scopes(g, inputs)?;
    let k = t.k();
    let outputs: Vec<Scope> = (0..k).map(|i| scopes[t.output_for_slot(i).0].clone()).collect();
    let mut violations = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let same_in = inputs[i] == inputs[j];
            let disjoint_in = inputs[i].is_disjoint(&inputs[j]);
            if !same_in && !disjoint_in {
                violations.push(InvarianceViolation::InputsOverlap { i, j });
            }
            if same_in != (outputs[i] == outputs[j]) {
                violations.push(InvarianceViolation::EqualityNotPreserved { i, j });
            }
            if disjoint_in != outputs[i].is_disjoint(&outputs[j]) {
                violations.push(InvarianceViolation::DisjointnessNotPreserved { i, j });
            }
        }
    }
    violations.extend(validity_from_scopes(g, &scopes).violations.into_iter().map(|v| match v {
        Violation::Incomplete { node, a, b } => InvarianceViolation::Incomplete { node, a, b },
        Violation::NotDecomposable { node, a, b } => InvarianceViolation::NotDecomposable { node, a, b },
    }));
    Ok(InvarianceReport { violations, output_scopes: outputs })
}

/// Outcome of checking the premises under which every unrolled model is
/// complete and decomposable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackingReport {
    /// (a) the bottom network on its own.
    pub bottom: ValidityReport,
    /// (b) pairs of bottom roots whose scopes overlap without being equal.
    pub overlapping_bottom_roots: Vec<(usize, usize)>,
    /// Classes induced by the bottom root scopes.
    pub assignment: ScopeAssignment,
    /// (c) the template under `assignment`.
    pub template: InvarianceReport,
    /// (c) the top network under `assignment`.
    pub top: ValidityReport,
}

impl StackingReport {
    pub fn is_valid(&self) -> bool {
        self.bottom.is_valid()
            && self.overlapping_bottom_roots.is_empty()
            && self.template.is_invariant()
            && self.top.is_valid()
    }
}

/// Premise check for validity of the model at every sequence length:
/// bottom complete and decomposable, bottom outputs pairwise identical or
/// disjoint, template invariant and top valid under the induced scope
/// classes.
pub fn verify_stacking(m: &DspnModel) -> Result<StackingReport> {
    let bottom_g: &SpnGraph = m.bottom().graph();
    let scopes = compute_scopes(bottom_g, &[])?;
    let bottom = validity_from_scopes(bottom_g, &scopes);
    let outs: Vec<Scope> = bottom_g.roots().iter().map(|r| scopes[r.0].clone()).collect();
    let mut overlapping = Vec::new();
    for i in 0..outs.len() {
        for j in i + 1..outs.len() {
            if outs[i] != outs[j] && outs[i].intersects(&outs[j]) {
                overlapping.push((i, j));
            }
        }
    }
    let assignment = ScopeAssignment::from_scopes(&outs);
    let template = check_invariance(m.template(), &assignment)?;
    let top_scopes = compute_scopes(m.top().graph(), &assignment.input_scopes())?;
    let top = validity_from_scopes(m.top().graph(), &top_scopes);
    Ok(StackingReport { bottom, overlapping_bottom_roots: overlapping, assignment, template, top })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_canonical_labels() {
        let a = ScopeAssignment::from_labels(&[7, 3, 7, 9]);
        assert_eq!(a.classes(), &[0, 1, 0, 2]);
        assert_eq!(a.n_classes(), 3);
        let s = ScopeAssignment::from_scopes(&[Scope::var(1), Scope::var(2), Scope::var(1)]);
        assert_eq!(s.classes(), &[0, 1, 0]);
        assert_eq!(ScopeAssignment::single(0).n_classes(), 0);
    }
}
