use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::logspace;
use crate::{Error, Result};

/// Sum-node weights must add up to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Dense index into an [`SpnGraph`] node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Sum { children: Vec<NodeId>, weights: Vec<f64> },
    Product { children: Vec<NodeId> },
    /// `I[var == value]`.
    Indicator { var: usize, value: u32 },
    /// Leaf whose value is supplied by the network stacked underneath.
    InterfaceInput { slot: usize },
}

impl Node {
    pub fn children(&self) -> &[NodeId] {
        match self {
            Node::Sum { children, .. } | Node::Product { children } => children,
            Node::Indicator { .. } | Node::InterfaceInput { .. } => &[],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Indicator { .. } | Node::InterfaceInput { .. })
    }

    pub fn is_sum(&self) -> bool {
        matches!(self, Node::Sum { .. })
    }

    pub fn is_product(&self) -> bool {
        matches!(self, Node::Product { .. })
    }
}

/// Rooted DAG of sum, product, indicator and interface-input nodes.
///
/// Immutable once built apart from sum weights. A children-before-parents
/// ordering is computed at construction and every pass follows it. Sum-node
/// edges are numbered consecutively (node order, then child order) so that
/// weights, gradients and EM statistics can live in flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpnGraph {
    nodes: Vec<Node>,
    roots: Vec<NodeId>,
    arities: Vec<usize>,
    n_interface_inputs: usize,
    order: Vec<NodeId>,
    edge_offset: Vec<usize>,
    log_weights: Vec<f64>,
}

impl SpnGraph {
    /// Builds a graph whose sum weights are normalized.
    pub fn new(
        nodes: Vec<Node>,
        roots: Vec<NodeId>,
        arities: Vec<usize>,
        n_interface_inputs: usize,
    ) -> Result<Self> {
        let g = Self::new_unnormalized(nodes, roots, arities, n_interface_inputs)?;
        for (i, node) in g.nodes.iter().enumerate() {
            if let Node::Sum { weights, .. } = node {
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::MalformedNode { node: i, reason: "weights do not sum to one" });
                }
            }
        }
        Ok(g)
    }

    /// Builds a graph allowing arbitrary non-negative sum weights.
    pub fn new_unnormalized(
        nodes: Vec<Node>,
        roots: Vec<NodeId>,
        arities: Vec<usize>,
        n_interface_inputs: usize,
    ) -> Result<Self> {
        let n_vars = arities.len();
        for (i, node) in nodes.iter().enumerate() {
            for c in node.children() {
                if c.0 >= nodes.len() {
                    return Err(Error::DanglingChild { node: i, child: c.0 });
                }
            }
            match node {
                Node::Sum { children, weights } => {
                    if children.is_empty() {
                        return Err(Error::MalformedNode { node: i, reason: "sum without children" });
                    }
                    if weights.len() != children.len() {
                        return Err(Error::MalformedNode { node: i, reason: "weight count differs from child count" });
                    }
                    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                        return Err(Error::MalformedNode { node: i, reason: "negative or non-finite weight" });
                    }
                }
                Node::Product { children } => {
                    if children.is_empty() {
                        return Err(Error::MalformedNode { node: i, reason: "product without children" });
                    }
                }
                Node::Indicator { var, value } => {
                    if *var >= n_vars {
                        return Err(Error::MalformedNode { node: i, reason: "indicator variable out of range" });
                    }
                    if *value as usize >= arities[*var] {
                        return Err(Error::ArityViolation { var: *var, value: *value, arity: arities[*var] });
                    }
                }
                Node::InterfaceInput { slot } => {
                    if *slot >= n_interface_inputs {
                        return Err(Error::MalformedNode { node: i, reason: "interface slot out of range" });
                    }
                }
            }
        }
        for r in &roots {
            if r.0 >= nodes.len() {
                return Err(Error::BadRoot(r.0));
            }
        }
        let order = topological_order(&nodes)?;
        let mut edge_offset = vec![0; nodes.len()];
        let mut log_weights = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            edge_offset[i] = log_weights.len();
            if let Node::Sum { weights, .. } = node {
                log_weights.extend(weights.iter().map(|&w| logspace::ln(w)));
            }
        }
        Ok(SpnGraph { nodes, roots, arities, n_interface_inputs, order, edge_offset, log_weights })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn n_vars(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn n_interface_inputs(&self) -> usize {
        self.n_interface_inputs
    }

    /// Children-before-parents order over all nodes.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    /// Number of sum-node edges (free weights).
    pub fn n_edges(&self) -> usize {
        self.log_weights.len()
    }

    /// Index of the first edge of `id` in the flat edge numbering.
    pub fn edge_offset(&self, id: NodeId) -> usize {
        self.edge_offset[id.0]
    }

    pub(crate) fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn sum_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&id| self.node(id).is_sum())
    }

    pub fn product_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&id| self.node(id).is_product())
    }

    /// Interface input node per slot (`None` for slots with no leaf).
    pub fn interface_inputs(&self) -> Vec<Option<NodeId>> {
        let mut out = vec![None; self.n_interface_inputs];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::InterfaceInput { slot } = node {
                out[*slot] = Some(NodeId(i));
            }
        }
        out
    }

    /// All sum weights in edge order.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_edges());
        for node in &self.nodes {
            if let Node::Sum { weights, .. } = node {
                out.extend_from_slice(weights);
            }
        }
        out
    }

    /// Overwrites all sum weights from a flat edge-ordered vector. No
    /// normalization check; see [`SpnGraph::is_normalized`].
    pub fn set_weights(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_edges() {
            return Err(Error::Config("weight vector length differs from edge count"));
        }
        if flat.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("negative or non-finite weight"));
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if let Node::Sum { weights, .. } = node {
                let off = self.edge_offset[i];
                let len = weights.len();
                weights.copy_from_slice(&flat[off..off + len]);
            }
        }
        for (lw, &w) in self.log_weights.iter_mut().zip(flat) {
            *lw = logspace::ln(w);
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Sum { weights, .. } => {
                (weights.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL
            }
            _ => true,
        })
    }

    pub fn into_parts(self) -> (Vec<Node>, Vec<NodeId>, Vec<usize>, usize) {
        (self.nodes, self.roots, self.arities, self.n_interface_inputs)
    }

    /// Whether each node has an indicator leaf among its descendants
    /// (itself included).
    pub fn indicator_reachability(&self) -> Vec<bool> {
        let mut has = vec![false; self.len()];
        for &id in &self.order {
            has[id.0] = match self.node(id) {
                Node::Indicator { .. } => true,
                Node::InterfaceInput { .. } => false,
                n => n.children().iter().any(|c| has[c.0]),
            };
        }
        has
    }

    /// Nodes reachable from the roots.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<NodeId> = self.roots.clone();
        while let Some(id) = stack.pop() {
            if core::mem::replace(&mut seen[id.0], true) {
                continue;
            }
            stack.extend_from_slice(self.node(id).children());
        }
        seen
    }
}

fn topological_order(nodes: &[Node]) -> Result<Vec<NodeId>> {
    // Iterative DFS post-order; state 1 = on stack, 2 = done.
    let mut state = vec![0u8; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..nodes.len() {
        if state[start] != 0 {
            continue;
        }
        state[start] = 1;
        stack.push((start, 0));
        while let Some(top) = stack.last_mut() {
            let (id, next) = *top;
            let children = nodes[id].children();
            if next < children.len() {
                top.1 += 1;
                let c = children[next].0;
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(Error::Cycle(c)),
                    _ => {}
                }
            } else {
                state[id] = 2;
                order.push(NodeId(id));
                stack.pop();
            }
        }
    }
    Ok(order)
}

/// Incremental construction helper. Indicator leaves are shared: asking for
/// the same `(var, value)` twice returns the same node.
#[derive(Debug, Clone, Default)]
pub struct SpnBuilder {
    nodes: Vec<Node>,
    arities: Vec<usize>,
    n_interface_inputs: usize,
    indicators: BTreeMap<(usize, u32), NodeId>,
    inputs: BTreeMap<usize, NodeId>,
}

impl SpnBuilder {
    pub fn new(arities: Vec<usize>, n_interface_inputs: usize) -> Self {
        SpnBuilder { arities, n_interface_inputs, ..Default::default() }
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn indicator(&mut self, var: usize, value: u32) -> NodeId {
        if let Some(&id) = self.indicators.get(&(var, value)) {
            return id;
        }
        let id = self.push(Node::Indicator { var, value });
        self.indicators.insert((var, value), id);
        id
    }

    pub fn input(&mut self, slot: usize) -> NodeId {
        if let Some(&id) = self.inputs.get(&slot) {
            return id;
        }
        let id = self.push(Node::InterfaceInput { slot });
        self.inputs.insert(slot, id);
        id
    }

    pub fn sum(&mut self, children: Vec<NodeId>, weights: Vec<f64>) -> NodeId {
        self.push(Node::Sum { children, weights })
    }

    pub fn product(&mut self, children: Vec<NodeId>) -> NodeId {
        self.push(Node::Product { children })
    }

    /// Sum over the indicators of `var` with the given weights.
    pub fn univariate(&mut self, var: usize, weights: Vec<f64>) -> NodeId {
        let children = (0..self.arities[var] as u32).map(|v| self.indicator(var, v)).collect();
        self.sum(children, weights)
    }

    /// Uniform univariate distribution over `var`.
    pub fn uniform_univariate(&mut self, var: usize) -> NodeId {
        let a = self.arities[var];
        self.univariate(var, vec![1.0 / a as f64; a])
    }

    pub fn build(self, roots: Vec<NodeId>) -> Result<SpnGraph> {
        SpnGraph::new(self.nodes, roots, self.arities, self.n_interface_inputs)
    }

    pub fn build_unnormalized(self, roots: Vec<NodeId>) -> Result<SpnGraph> {
        SpnGraph::new_unnormalized(self.nodes, roots, self.arities, self.n_interface_inputs)
    }
}
