use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::DspnModel;
use crate::spn::{Node, NodeId, SpnGraph};
use crate::{Error, Result};

/// Ancestral sample of a `t`-slice sequence: the top network picks interface
/// slots, each template copy (last slice first) is descended from the roots
/// feeding the requested slots, then the bottom network.
pub fn sample<R: Rng + ?Sized>(m: &DspnModel, t: usize, rng: &mut R) -> Result<Vec<Vec<u32>>> {
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    let n = m.n_vars();
    let k = m.k();
    let mut out: Vec<Vec<Option<u32>>> = vec![vec![None; n]; t];
    let mut requested = vec![false; k];
    let mut scratch = vec![None; n];

    let top = m.top().graph();
    descend(top, &top.roots()[..1], rng, &mut scratch, &mut requested);

    let tmpl = m.template();
    for slice in (1..t).rev() {
        let starts: Vec<NodeId> = (0..k).filter(|&s| requested[s]).map(|s| tmpl.output_for_slot(s)).collect();
        requested.iter_mut().for_each(|r| *r = false);
        descend(tmpl.graph(), &starts, rng, &mut out[slice], &mut requested);
    }
    let bottom = m.bottom().graph();
    let starts: Vec<NodeId> = (0..k).filter(|&s| requested[s]).map(|s| bottom.roots()[s]).collect();
    requested.iter_mut().for_each(|r| *r = false);
    descend(bottom, &starts, rng, &mut out[0], &mut requested);

    out.into_iter()
        .enumerate()
        .map(|(slice, vals)| {
            vals.into_iter()
                .enumerate()
                .map(|(var, v)| v.ok_or(Error::IncompleteSample { slice, var }))
                .collect()
        })
        .collect()
}

fn descend<R: Rng + ?Sized>(
    g: &SpnGraph,
    starts: &[NodeId],
    rng: &mut R,
    assign: &mut [Option<u32>],
    requested: &mut [bool],
) {
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<NodeId> = starts.to_vec();
    while let Some(id) = stack.pop() {
        if core::mem::replace(&mut seen[id.0], true) {
            continue;
        }
        match g.node(id) {
            Node::Indicator { var, value } => assign[*var] = Some(*value),
            Node::InterfaceInput { slot } => requested[*slot] = true,
            Node::Product { children } => stack.extend_from_slice(children),
            Node::Sum { children, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                // Rounding can leave `u` past the end; fall back to the last
                // child with positive weight.
                let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                for (j, &w) in weights.iter().enumerate() {
                    if u < w {
                        pick = j;
                        break;
                    }
                    u -= w;
                }
                stack.push(children[pick]);
            }
        }
    }
}
