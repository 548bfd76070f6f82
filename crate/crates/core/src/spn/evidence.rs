use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Per-variable assignment: `Some(value)` is observed, `None` is
/// marginalized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Evidence(pub Vec<Option<u32>>);

impl Evidence {
    /// Every variable marginalized.
    pub fn marginal(n_vars: usize) -> Self {
        Evidence(vec![None; n_vars])
    }

    pub fn observed(values: &[u32]) -> Self {
        Evidence(values.iter().map(|&v| Some(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, var: usize) -> Option<u32> {
        self.0[var]
    }

    pub fn set(&mut self, var: usize, value: Option<u32>) {
        self.0[var] = value;
    }

    pub fn with(mut self, var: usize, value: u32) -> Self {
        self.0[var] = Some(value);
        self
    }

    pub fn observed_vars(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    pub fn validate(&self, arities: &[usize]) -> Result<()> {
        if self.0.len() != arities.len() {
            return Err(Error::EvidenceWidth { expected: arities.len(), got: self.0.len() });
        }
        for (var, value) in self.observed_vars() {
            if value as usize >= arities[var] {
                return Err(Error::ArityViolation { var, value, arity: arities[var] });
            }
        }
        Ok(())
    }

    /// Combines two assignments over disjoint variable sets.
    pub fn union(&self, other: &Evidence) -> Result<Evidence> {
        if self.0.len() != other.0.len() {
            return Err(Error::EvidenceWidth { expected: self.0.len(), got: other.0.len() });
        }
        let mut out = self.clone();
        for (var, value) in other.observed_vars() {
            if self.0[var].is_some() {
                return Err(Error::Disjointness(var));
            }
            out.0[var] = Some(value);
        }
        Ok(out)
    }

    /// Concatenates per-slice evidence into one flat assignment
    /// (slice `t`, variable `v` becomes `t * n + v`).
    pub fn concat(slices: &[Evidence]) -> Evidence {
        Evidence(slices.iter().flat_map(|s| s.0.iter().copied()).collect())
    }
}
