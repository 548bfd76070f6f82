use alloc::vec::Vec;

use super::{DspnModel, Part, TemplateNetwork};
use crate::spn::{Node, NodeId, SpnGraph};
use crate::{Error, Result};

/// Provenance of each node of an unrolled graph: which part it was copied
/// from, the copy index (bottom 0, templates 1..T-1, top T) and the node in
/// that part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrollMap {
    pub origin: Vec<(Part, usize, NodeId)>,
}

struct Stacker {
    nodes: Vec<Node>,
    origin: Vec<(Part, usize, NodeId)>,
}

impl Stacker {
    /// Copies `g`, shifting indicator variables by `var_offset` and merging
    /// interface input slot `s` into `iface[s]`. Returns the old-to-new map.
    fn append(&mut self, g: &SpnGraph, var_offset: usize, iface: &[NodeId], part: Part, copy: usize) -> Vec<NodeId> {
        let mut map = Vec::with_capacity(g.len());
        // Pre-assign ids in node order so children can be remapped in one pass.
        let mut next = self.nodes.len();
        for node in g.nodes() {
            match node {
                Node::InterfaceInput { slot } => map.push(iface[*slot]),
                _ => {
                    map.push(NodeId(next));
                    next += 1;
                }
            }
        }
        for (i, node) in g.nodes().iter().enumerate() {
            let copied = match node {
                Node::InterfaceInput { .. } => continue,
                Node::Indicator { var, value } => Node::Indicator { var: var + var_offset, value: *value },
                Node::Sum { children, weights } => Node::Sum {
                    children: children.iter().map(|c| map[c.0]).collect(),
                    weights: weights.clone(),
                },
                Node::Product { children } => Node::Product {
                    children: children.iter().map(|c| map[c.0]).collect(),
                },
            };
            self.nodes.push(copied);
            self.origin.push((part, copy, NodeId(i)));
        }
        map
    }
}

pub fn unroll(m: &DspnModel, t: usize) -> Result<SpnGraph> {
    unroll_with_map(m, t).map(|(g, _)| g)
}

/// Materializes the model over `t` slices: one bottom copy, `t - 1` template
/// copies and the top network, with slice `s` variable `v` renumbered to
/// `s * n + v`.
pub fn unroll_with_map(m: &DspnModel, t: usize) -> Result<(SpnGraph, UnrollMap)> {
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    let n = m.n_vars();
    let mut st = Stacker { nodes: Vec::new(), origin: Vec::new() };
    let bottom = m.bottom().graph();
    let map = st.append(bottom, 0, &[], Part::Bottom, 0);
    let mut iface: Vec<NodeId> = bottom.roots().iter().map(|r| map[r.0]).collect();
    let tmpl = m.template();
    for copy in 1..t {
        let map = st.append(tmpl.graph(), copy * n, &iface, Part::Template, copy);
        iface = (0..tmpl.k()).map(|s| map[tmpl.output_for_slot(s).0]).collect();
    }
    let top = m.top().graph();
    let map = st.append(top, 0, &iface, Part::Top, t);
    let root = map[top.roots()[0].0];
    let arities = m.arities().iter().copied().cycle().take(n * t).collect();
    let g = SpnGraph::new_unnormalized(st.nodes, alloc::vec![root], arities, 0)?;
    Ok((g, UnrollMap { origin: st.origin }))
}

/// Template equivalent to `copies` stacked copies of `t`: copy `c` reads the
/// variables `c * n .. (c + 1) * n`, its inputs are those of the first copy
/// and its roots (in slot order, identity map) those of the last.
pub fn stack_templates(t: &TemplateNetwork, copies: usize) -> Result<TemplateNetwork> {
    if copies == 0 {
        return Err(Error::Config("need at least one copy"));
    }
    let k = t.k();
    let n = t.n_vars();
    let mut st = Stacker { nodes: Vec::new(), origin: Vec::new() };
    let mut iface: Vec<NodeId> = (0..k).map(NodeId).collect();
    st.nodes.extend((0..k).map(|slot| Node::InterfaceInput { slot }));
    for copy in 0..copies {
        let map = st.append(t.graph(), copy * n, &iface, Part::Template, copy);
        iface = (0..k).map(|s| map[t.output_for_slot(s).0]).collect();
    }
    let arities = t.graph().arities().iter().copied().cycle().take(n * copies).collect();
    let g = SpnGraph::new_unnormalized(st.nodes, iface, arities, k)?;
    TemplateNetwork::with_identity_map(g)
}
