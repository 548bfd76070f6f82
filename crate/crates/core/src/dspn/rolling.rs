use alloc::vec::Vec;

use super::DspnModel;
use crate::spn::{forward_into, Evidence};
use crate::{Error, Result};

/// Reusable buffers for folding a model over sequences without
/// materializing the unrolled graph.
#[derive(Debug, Default, Clone)]
pub struct RollingEvaluator {
    values: Vec<f64>,
    iface: Vec<f64>,
    next: Vec<f64>,
}

impl RollingEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn loglik(&mut self, m: &DspnModel, seq: &[Evidence]) -> Result<f64> {
        let (first, rest) = seq.split_first().ok_or(Error::EmptySequence)?;
        for slice in seq {
            slice.validate(m.arities())?;
        }
        let bottom = m.bottom().graph();
        forward_into(bottom, first, &[], &mut self.values)?;
        self.iface.clear();
        self.iface.extend(bottom.roots().iter().map(|r| self.values[r.0]));
        let t = m.template();
        for slice in rest {
            forward_into(t.graph(), slice, &self.iface, &mut self.values)?;
            self.next.clear();
            self.next.extend((0..t.k()).map(|s| self.values[t.output_for_slot(s).0]));
            core::mem::swap(&mut self.iface, &mut self.next);
        }
        let top = m.top().graph();
        let marginal = Evidence::marginal(top.n_vars());
        forward_into(top, &marginal, &self.iface, &mut self.values)?;
        Ok(self.values[top.roots()[0].0])
    }
}

/// Log-likelihood of one sequence: bottom on the first slice, the template
/// folded over the remaining slices, then the top network.
pub fn sequence_loglik(m: &DspnModel, seq: &[Evidence]) -> Result<f64> {
    RollingEvaluator::new().loglik(m, seq)
}
