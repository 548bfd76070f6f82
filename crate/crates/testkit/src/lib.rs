//! Random valid networks and brute-force reference computations for tests.
//!
//! The oracles here evaluate networks in the linear domain by plain
//! recursion and enumerate assignments explicitly; they share no code with
//! the log-space evaluator under test.

use dspn_core::dspn::{derive_bottom, DspnModel, TemplateNetwork, TopNetwork};
use dspn_core::partition::ScopeElem;
use dspn_core::spn::{Evidence, Node, NodeId, SpnBuilder, SpnGraph};
use rand::seq::SliceRandom;
use rand::Rng;

pub use rand_chacha::ChaCha8Rng;
pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized weights with every entry at least ~0.05 of the mass.
pub fn random_weights<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| 0.1 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random split of `ground` into at least two non-empty blocks.
fn random_split<T: Clone, R: Rng>(ground: &[T], rng: &mut R) -> Vec<Vec<T>> {
    let mut items = ground.to_vec();
    items.shuffle(rng);
    let n_blocks = rng.random_range(2..=ground.len().min(3));
    let mut blocks: Vec<Vec<T>> = (0..n_blocks).map(|_| Vec::new()).collect();
    for (i, x) in items.into_iter().enumerate() {
        let b = if i < n_blocks { i } else { rng.random_range(0..n_blocks) };
        blocks[b].push(x);
    }
    blocks
}

/// Recursive random valid sub-network over `ground`: a sum of products over
/// random splits, bottoming out in univariate distributions and, for the
/// interface element, mixtures over random non-empty subsets of inputs.
pub fn random_scoped<R: Rng>(b: &mut SpnBuilder, ground: &[ScopeElem], k: usize, depth: usize, rng: &mut R) -> NodeId {
    if ground.len() == 1 {
        return match ground[0] {
            ScopeElem::Var(v) => {
                let a = b_arity(b, v);
                b.univariate(v, random_weights(a, rng))
            }
            ScopeElem::Interface => {
                let mut slots: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.7)).collect();
                if slots.is_empty() {
                    slots.push(rng.random_range(0..k));
                }
                let children: Vec<NodeId> = slots.iter().map(|&s| b.input(s)).collect();
                let w = random_weights(children.len(), rng);
                b.sum(children, w)
            }
        };
    }
    let n_children = if depth == 0 { 1 } else { rng.random_range(1..=3) };
    let products: Vec<NodeId> = (0..n_children)
        .map(|_| {
            let blocks = random_split(ground, rng);
            let cs: Vec<NodeId> =
                blocks.iter().map(|blk| random_scoped(b, blk, k, depth.saturating_sub(1), rng)).collect();
            b.product(cs)
        })
        .collect();
    if products.len() == 1 {
        products[0]
    } else {
        let w = random_weights(products.len(), rng);
        b.sum(products, w)
    }
}

fn b_arity(b: &SpnBuilder, v: usize) -> usize {
    b.arities()[v]
}

pub fn random_arities<R: Rng>(n: usize, max_arity: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(2..=max_arity)).collect()
}

/// Random complete and decomposable network over all variables, one root.
pub fn random_spn<R: Rng>(arities: &[usize], rng: &mut R) -> SpnGraph {
    let ground: Vec<ScopeElem> = (0..arities.len()).map(ScopeElem::Var).collect();
    let mut b = SpnBuilder::new(arities.to_vec(), 0);
    let root = random_scoped(&mut b, &ground, 0, 4, rng);
    b.build(vec![root]).expect("generator builds valid graphs")
}

/// Random template that is invariant by construction: every root covers all
/// variables plus the interface element.
pub fn random_template<R: Rng>(arities: &[usize], k: usize, rng: &mut R) -> TemplateNetwork {
    let mut ground: Vec<ScopeElem> = (0..arities.len()).map(ScopeElem::Var).collect();
    ground.push(ScopeElem::Interface);
    let mut b = SpnBuilder::new(arities.to_vec(), k);
    // Every slot must own an input leaf, even if no mixture picked it.
    for s in 0..k {
        b.input(s);
    }
    let roots: Vec<NodeId> = (0..k).map(|_| random_scoped(&mut b, &ground, k, 3, rng)).collect();
    let mut f: Vec<usize> = (0..k).collect();
    f.shuffle(rng);
    TemplateNetwork::new(b.build(roots).expect("valid"), f).expect("bijective map")
}

pub fn random_top<R: Rng>(arities: &[usize], k: usize, rng: &mut R) -> TopNetwork {
    let mut b = SpnBuilder::new(arities.to_vec(), k);
    for s in 0..k {
        b.input(s);
    }
    let root = random_scoped(&mut b, &[ScopeElem::Interface], k, 0, rng);
    let extra = random_scoped(&mut b, &[ScopeElem::Interface], k, 0, rng);
    let w = random_weights(2, rng);
    let top = b.sum(vec![root, extra], w);
    TopNetwork::new(b.build(vec![top]).expect("valid")).expect("top shape")
}

/// Random model that passes the stacking checks.
pub fn random_model<R: Rng>(arities: &[usize], k: usize, rng: &mut R) -> DspnModel {
    let t = random_template(arities, k, rng);
    let bottom = derive_bottom(&t).expect("roots carry variables");
    let top = random_top(arities, k, rng);
    DspnModel::new(bottom, t, top).expect("invariant by construction")
}

/// Random evidence with each variable observed with probability `p_obs`.
pub fn random_evidence<R: Rng>(arities: &[usize], p_obs: f64, rng: &mut R) -> Evidence {
    Evidence(
        arities
            .iter()
            .map(|&a| rng.random_bool(p_obs).then(|| rng.random_range(0..a as u32)))
            .collect(),
    )
}

/// Linear-domain value of every node by direct recursion, with indicators
/// fixed by the complete assignment `x` and interface inputs set to `iface`.
pub fn linear_values(g: &SpnGraph, x: &[u32], iface: &[f64]) -> Vec<f64> {
    fn visit(g: &SpnGraph, id: NodeId, x: &[u32], iface: &[f64], memo: &mut Vec<Option<f64>>) -> f64 {
        if let Some(v) = memo[id.0] {
            return v;
        }
        let v = match g.node(id) {
            Node::Indicator { var, value } => f64::from(u8::from(x[*var] == *value)),
            Node::InterfaceInput { slot } => iface[*slot],
            Node::Product { children } => children.iter().map(|c| visit(g, *c, x, iface, memo)).product(),
            Node::Sum { children, weights } => {
                children.iter().zip(weights).map(|(c, w)| w * visit(g, *c, x, iface, memo)).sum()
            }
        };
        memo[id.0] = Some(v);
        v
    }
    let mut memo = vec![None; g.len()];
    (0..g.len()).map(|i| visit(g, NodeId(i), x, iface, &mut memo)).collect()
}

/// Every complete assignment consistent with `ev`.
pub fn completions(arities: &[usize], ev: &Evidence) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for (v, &a) in arities.iter().enumerate() {
        let values: Vec<u32> = match ev.get(v) {
            Some(x) => vec![x],
            None => (0..a as u32).collect(),
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// Probability of `ev` under the first root: sum of the network polynomial
/// over all consistent complete assignments.
pub fn enumerate_probability(g: &SpnGraph, ev: &Evidence) -> f64 {
    let root = g.roots()[0];
    completions(g.arities(), ev).iter().map(|x| linear_values(g, x, &[])[root.0]).sum()
}

/// Sequence probability by enumerating every completion of the whole
/// sequence and evaluating bottom, template copies and top in the linear
/// domain.
pub fn enumerate_sequence_probability(m: &DspnModel, seq: &[Evidence]) -> f64 {
    let n = m.n_vars();
    let flat = Evidence::concat(seq);
    let arities: Vec<usize> = (0..seq.len()).flat_map(|_| m.arities().iter().copied()).collect();
    completions(&arities, &flat)
        .iter()
        .map(|x| linear_sequence_value(m, &x.chunks(n).map(<[u32]>::to_vec).collect::<Vec<_>>()))
        .sum()
}

/// Linear-domain joint value of one complete sequence.
pub fn linear_sequence_value(m: &DspnModel, slices: &[Vec<u32>]) -> f64 {
    let bottom = m.bottom().graph();
    let v = linear_values(bottom, &slices[0], &[]);
    let mut iface: Vec<f64> = bottom.roots().iter().map(|r| v[r.0]).collect();
    let t = m.template();
    for x in &slices[1..] {
        let v = linear_values(t.graph(), x, &iface);
        iface = (0..t.k()).map(|s| v[t.output_for_slot(s).0]).collect();
    }
    let top = m.top().graph();
    let v = linear_values(top, &vec![0; m.n_vars()], &iface);
    v[top.roots()[0].0]
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
