use alloc::vec;
use alloc::vec::Vec;

use super::invariance::verify_stacking;
use crate::spn::{Node, NodeId, SpnGraph};
use crate::{Error, Result};

fn one_input_per_slot(g: &SpnGraph) -> bool {
    let mut slots = vec![0usize; g.n_interface_inputs()];
    for node in g.nodes() {
        if let Node::InterfaceInput { slot } = node {
            slots[*slot] += 1;
        }
    }
    slots.iter().all(|&c| c == 1)
}

/// Repeated per-slice network: `k` interface input leaves, `k` output roots
/// and the bijection `f_map` from input slot to root index.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateNetwork {
    graph: SpnGraph,
    f_map: Vec<usize>,
}

impl TemplateNetwork {
    pub fn new(graph: SpnGraph, f_map: Vec<usize>) -> Result<Self> {
        let k = graph.n_interface_inputs();
        if graph.roots().len() != k {
            return Err(Error::SignatureMismatch("template must have k roots"));
        }
        if f_map.len() != k {
            return Err(Error::NotBijection);
        }
        let mut hit = vec![false; k];
        for &r in &f_map {
            if r >= k || core::mem::replace(&mut hit[r], true) {
                return Err(Error::NotBijection);
            }
        }
        if !one_input_per_slot(&graph) {
            return Err(Error::SignatureMismatch("template needs exactly one input leaf per slot"));
        }
        let mut distinct = graph.roots().to_vec();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != k {
            return Err(Error::SignatureMismatch("template roots must be distinct"));
        }
        Ok(TemplateNetwork { graph, f_map })
    }

    /// Identity interface map.
    pub fn with_identity_map(graph: SpnGraph) -> Result<Self> {
        let k = graph.n_interface_inputs();
        Self::new(graph, (0..k).collect())
    }

    pub fn graph(&self) -> &SpnGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut SpnGraph {
        &mut self.graph
    }

    pub fn into_graph(self) -> SpnGraph {
        self.graph
    }

    pub fn f_map(&self) -> &[usize] {
        &self.f_map
    }

    pub fn k(&self) -> usize {
        self.f_map.len()
    }

    pub fn n_vars(&self) -> usize {
        self.graph.n_vars()
    }

    /// Root feeding slot `slot` of the next slice.
    pub fn output_for_slot(&self, slot: usize) -> NodeId {
        self.graph.roots()[self.f_map[slot]]
    }
}

/// First-slice network: `k` roots aligned with the template's input slots,
/// no interface inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BottomNetwork {
    graph: SpnGraph,
}

impl BottomNetwork {
    pub fn new(graph: SpnGraph) -> Result<Self> {
        if graph.n_interface_inputs() != 0 {
            return Err(Error::SignatureMismatch("bottom network has interface inputs"));
        }
        Ok(BottomNetwork { graph })
    }

    pub fn graph(&self) -> &SpnGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut SpnGraph {
        &mut self.graph
    }

    pub fn k(&self) -> usize {
        self.graph.roots().len()
    }
}

/// Capping network: a single root over the `k` interface slots, no
/// indicator leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct TopNetwork {
    graph: SpnGraph,
}

impl TopNetwork {
    pub fn new(graph: SpnGraph) -> Result<Self> {
        if graph.roots().len() != 1 {
            return Err(Error::SignatureMismatch("top network must have one root"));
        }
        if graph.nodes().iter().any(|n| matches!(n, Node::Indicator { .. })) {
            return Err(Error::SignatureMismatch("top network has indicator leaves"));
        }
        if !one_input_per_slot(&graph) {
            return Err(Error::SignatureMismatch("top network needs exactly one input leaf per slot"));
        }
        Ok(TopNetwork { graph })
    }

    /// Root sum over all interface slots with the given weights.
    pub fn mixture(arities: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        let mut nodes: Vec<Node> = (0..k).map(|slot| Node::InterfaceInput { slot }).collect();
        nodes.push(Node::Sum { children: (0..k).map(NodeId).collect(), weights });
        Self::new(SpnGraph::new(nodes, vec![NodeId(k)], arities, k)?)
    }

    pub fn uniform(arities: Vec<usize>, k: usize) -> Result<Self> {
        Self::mixture(arities, vec![1.0 / k as f64; k])
    }

    pub fn graph(&self) -> &SpnGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut SpnGraph {
        &mut self.graph
    }

    pub fn k(&self) -> usize {
        self.graph.n_interface_inputs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Bottom,
    Template,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspnModel {
    bottom: BottomNetwork,
    template: TemplateNetwork,
    top: TopNetwork,
}

impl DspnModel {
    /// Assembles a model and rejects it unless the stacking validity premises
    /// hold (see [`verify_stacking`]).
    pub fn new(bottom: BottomNetwork, template: TemplateNetwork, top: TopNetwork) -> Result<Self> {
        let m = Self::new_unchecked(bottom, template, top)?;
        if !verify_stacking(&m)?.is_valid() {
            return Err(Error::NotInvariant);
        }
        Ok(m)
    }

    /// Checks only that the three parts share one signature.
    pub fn new_unchecked(
        bottom: BottomNetwork,
        template: TemplateNetwork,
        top: TopNetwork,
    ) -> Result<Self> {
        let k = template.k();
        if bottom.k() != k || top.k() != k {
            return Err(Error::SignatureMismatch("interface width differs between parts"));
        }
        if bottom.graph().arities() != template.graph().arities() {
            return Err(Error::SignatureMismatch("bottom and template arities differ"));
        }
        if top.graph().arities() != template.graph().arities() {
            return Err(Error::SignatureMismatch("top and template arities differ"));
        }
        Ok(DspnModel { bottom, template, top })
    }

    pub fn bottom(&self) -> &BottomNetwork {
        &self.bottom
    }

    pub fn template(&self) -> &TemplateNetwork {
        &self.template
    }

    pub fn top(&self) -> &TopNetwork {
        &self.top
    }

    pub fn k(&self) -> usize {
        self.template.k()
    }

    pub fn n_vars(&self) -> usize {
        self.template.n_vars()
    }

    pub fn arities(&self) -> &[usize] {
        self.template.graph().arities()
    }

    pub fn graph(&self, part: Part) -> &SpnGraph {
        match part {
            Part::Bottom => self.bottom.graph(),
            Part::Template => self.template.graph(),
            Part::Top => self.top.graph(),
        }
    }

    pub fn graph_mut(&mut self, part: Part) -> &mut SpnGraph {
        match part {
            Part::Bottom => self.bottom.graph_mut(),
            Part::Template => self.template.graph_mut(),
            Part::Top => self.top.graph_mut(),
        }
    }

    pub fn into_parts(self) -> (BottomNetwork, TemplateNetwork, TopNetwork) {
        (self.bottom, self.template, self.top)
    }

    pub fn is_normalized(&self) -> bool {
        [Part::Bottom, Part::Template, Part::Top].iter().all(|&p| self.graph(p).is_normalized())
    }
}

/// Bottom network obtained from a template by deleting every node without
/// an indicator descendant. Surviving sum weights are rescaled to sum to one;
/// roots are reordered so that root `i` feeds input slot `i`.
pub fn derive_bottom(t: &TemplateNetwork) -> Result<BottomNetwork> {
    let g = t.graph();
    let keep = g.indicator_reachability();
    let mut new_id = vec![usize::MAX; g.len()];
    let mut count = 0;
    for (i, &k) in keep.iter().enumerate() {
        if k {
            new_id[i] = count;
            count += 1;
        }
    }
    let mut nodes = Vec::with_capacity(count);
    for (i, node) in g.nodes().iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let mapped = match node {
            Node::Sum { children, weights } => {
                let (cs, mut ws): (Vec<NodeId>, Vec<f64>) = children
                    .iter()
                    .zip(weights)
                    .filter(|(c, _)| keep[c.0])
                    .map(|(c, &w)| (NodeId(new_id[c.0]), w))
                    .unzip();
                let total: f64 = ws.iter().sum();
                if total > 0.0 {
                    ws.iter_mut().for_each(|w| *w /= total);
                } else {
                    let u = 1.0 / ws.len() as f64;
                    ws.iter_mut().for_each(|w| *w = u);
                }
                Node::Sum { children: cs, weights: ws }
            }
            Node::Product { children } => Node::Product {
                children: children.iter().filter(|c| keep[c.0]).map(|c| NodeId(new_id[c.0])).collect(),
            },
            leaf => leaf.clone(),
        };
        nodes.push(mapped);
    }
    let mut roots = Vec::with_capacity(t.k());
    for slot in 0..t.k() {
        let r = t.output_for_slot(slot);
        if !keep[r.0] {
            return Err(Error::DegenerateTemplate(t.f_map()[slot]));
        }
        roots.push(NodeId(new_id[r.0]));
    }
    BottomNetwork::new(SpnGraph::new_unnormalized(nodes, roots, g.arities().to_vec(), 0)?)
}
