use std::collections::BTreeSet;

use dspn_core::logspace;
use dspn_core::spn::{
    backward, check_validity, compute_scopes, conditional_query, evaluate, for_each_edge, forward, Evidence, Node,
    NodeId, Scope, SpnBuilder, SpnGraph,
};
use dspn_core::Error;
use dspn_testkit::{enumerate_probability, random_arities, random_evidence, random_spn, rel_err, rng};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluate_matches_enumeration(seed in any::<u64>(), n in 1usize..=6, p_obs in 0.0f64..1.0) {
        let mut r = rng(seed);
        let arities = random_arities(n, 3, &mut r);
        let g = random_spn(&arities, &mut r);
        let ev = random_evidence(&arities, p_obs, &mut r);
        let got = logspace::exp(evaluate(&g, &ev, &[]).unwrap()[0]);
        prop_assert!(rel_err(got, enumerate_probability(&g, &ev), 1e-300) < 1e-9);
    }

    #[test]
    fn full_marginal_is_one(seed in any::<u64>(), n in 1usize..=8) {
        let mut r = rng(seed);
        let g = random_spn(&random_arities(n, 4, &mut r), &mut r);
        let ll = evaluate(&g, &Evidence::marginal(n), &[]).unwrap()[0];
        prop_assert!(ll.abs() < 1e-9);
    }

    #[test]
    fn conditional_matches_enumeration(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let arities = random_arities(n, 3, &mut r);
        let g = random_spn(&arities, &mut r);
        let mut query = Evidence::marginal(n);
        let mut given = Evidence::marginal(n);
        for v in 0..n {
            let x = r.random_range(0..arities[v] as u32);
            match r.random_range(0..3) {
                0 => query.set(v, Some(x)),
                1 => given.set(v, Some(x)),
                _ => {}
            }
        }
        let joint = enumerate_probability(&g, &query.union(&given).unwrap());
        let denom = enumerate_probability(&g, &given);
        let got = conditional_query(&g, &query, &given).unwrap();
        prop_assert!(rel_err(got, joint / denom, 1e-300) < 1e-9);
    }

    /// Every weight derivative against central differences on log S.
    #[test]
    fn weight_gradients_match_finite_differences(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let arities = random_arities(n, 3, &mut r);
        let g = random_spn(&arities, &mut r);
        let ev = random_evidence(&arities, 0.6, &mut r);
        let f = forward(&g, &ev, &[]).unwrap();
        let s = f.values[g.roots()[0].0];
        let d = backward(&g, &f.values, &[0.0]);
        let mut analytic = vec![0.0; g.n_edges()];
        for_each_edge(&g, &f.values, &d, |e, _, _, _, dn, vc| analytic[e] = logspace::exp(dn + vc - s));
        let w = g.weights();
        let h = 1e-5;
        for e in 0..w.len() {
            let mut probe = g.clone();
            let mut wp = w.clone();
            wp[e] += h;
            probe.set_weights(&wp).unwrap();
            let up = evaluate(&probe, &ev, &[]).unwrap()[0];
            wp[e] -= 2.0 * h;
            probe.set_weights(&wp).unwrap();
            let down = evaluate(&probe, &ev, &[]).unwrap()[0];
            let fd = (up - down) / (2.0 * h);
            prop_assert!(rel_err(analytic[e], fd, 1e-3) < 1e-4, "edge {}: {} vs {}", e, analytic[e], fd);
        }
    }

    /// Posterior responsibilities: the counts leaving a sum node add up to
    /// the probability that the node is on the induced tree, and the root's
    /// children share a total of one.
    #[test]
    fn edge_counts_are_responsibilities(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let arities = random_arities(n, 3, &mut r);
        let g = random_spn(&arities, &mut r);
        let ev = random_evidence(&arities, 0.5, &mut r);
        let f = forward(&g, &ev, &[]).unwrap();
        let s = f.values[g.roots()[0].0];
        let d = backward(&g, &f.values, &[0.0]);
        let mut out = vec![0.0; g.len()];
        for_each_edge(&g, &f.values, &d, |_, node, _, lw, dn, vc| out[node.0] += logspace::exp(lw + dn + vc - s));
        for id in g.sum_nodes() {
            let resp = logspace::exp(d[id.0] + f.values[id.0] - s);
            prop_assert!((out[id.0] - resp).abs() < 1e-9);
        }
        if g.node(g.roots()[0]).is_sum() {
            prop_assert!((out[g.roots()[0].0] - 1.0).abs() < 1e-9);
        }
    }
}

/// Scopes as plain variable sets by direct recursion.
fn oracle_scopes(g: &SpnGraph) -> Vec<BTreeSet<usize>> {
    fn visit(g: &SpnGraph, id: NodeId, memo: &mut Vec<Option<BTreeSet<usize>>>) -> BTreeSet<usize> {
        if let Some(s) = &memo[id.0] {
            return s.clone();
        }
        let s = match g.node(id) {
            Node::Indicator { var, .. } => BTreeSet::from([*var]),
            Node::InterfaceInput { .. } => BTreeSet::new(),
            n => n.children().iter().flat_map(|c| visit(g, *c, memo)).collect(),
        };
        memo[id.0] = Some(s.clone());
        s
    }
    let mut memo = vec![None; g.len()];
    (0..g.len()).map(|i| visit(g, NodeId(i), &mut memo)).collect()
}

fn oracle_flagged(g: &SpnGraph) -> BTreeSet<usize> {
    let scopes = oracle_scopes(g);
    let mut bad = BTreeSet::new();
    for (i, node) in g.nodes().iter().enumerate() {
        let cs = node.children();
        for a in 0..cs.len() {
            for b in a + 1..cs.len() {
                let (sa, sb) = (&scopes[cs[a].0], &scopes[cs[b].0]);
                let violated = match node {
                    Node::Sum { .. } => sa != sb,
                    Node::Product { .. } => !sa.is_disjoint(sb),
                    _ => false,
                };
                if violated {
                    bad.insert(i);
                }
            }
        }
    }
    bad
}

/// Redirects one random edge of a random valid graph to a random node that
/// is not an ancestor, keeping the graph acyclic.
fn mutate(g: &SpnGraph, r: &mut impl Rng) -> Option<SpnGraph> {
    let inner: Vec<usize> = (0..g.len()).filter(|&i| !g.nodes()[i].is_leaf()).collect();
    let src = inner[r.random_range(0..inner.len())];
    let (mut nodes, roots, arities, k) = g.clone().into_parts();
    // Nodes reachable from `src` would close a cycle only if they lead back;
    // descendants of src are safe targets, ancestors are not.
    let mut ancestors = vec![false; nodes.len()];
    ancestors[src] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for (i, n) in nodes.iter().enumerate() {
            if !ancestors[i] && n.children().iter().any(|c| ancestors[c.0]) {
                ancestors[i] = true;
                changed = true;
            }
        }
    }
    let targets: Vec<usize> = (0..nodes.len()).filter(|&i| !ancestors[i]).collect();
    if targets.is_empty() {
        return None;
    }
    let target = NodeId(targets[r.random_range(0..targets.len())]);
    match &mut nodes[src] {
        Node::Sum { children, .. } | Node::Product { children } => {
            let j = r.random_range(0..children.len());
            children[j] = target;
        }
        _ => unreachable!(),
    }
    SpnGraph::new(nodes, roots, arities, k).ok()
}

#[test]
fn mutated_edges_flag_exactly_the_oracle_nodes() {
    let mut r = rng(7);
    let mut checked = 0;
    let mut flagged_any = 0;
    while checked < 200 {
        let arities = random_arities(r.random_range(2..=6), 3, &mut r);
        let g = random_spn(&arities, &mut r);
        assert!(check_validity(&g, &[]).unwrap().is_valid());
        let Some(m) = mutate(&g, &mut r) else { continue };
        let got: BTreeSet<usize> = check_validity(&m, &[]).unwrap().flagged_nodes().into_iter().map(|n| n.0).collect();
        let want = oracle_flagged(&m);
        assert_eq!(got, want);
        flagged_any += usize::from(!want.is_empty());
        checked += 1;
    }
    assert!(flagged_any > 50, "mutations should usually break validity");
}

#[test]
fn scopes_equal_reachable_indicators() {
    let mut r = rng(3);
    for _ in 0..50 {
        let arities = random_arities(r.random_range(1..=7), 3, &mut r);
        let g = random_spn(&arities, &mut r);
        let scopes = compute_scopes(&g, &[]).unwrap();
        for (s, o) in scopes.iter().zip(oracle_scopes(&g)) {
            assert_eq!(s.vars.iter().collect::<BTreeSet<_>>(), o);
        }
    }
}

/// Product of a two-component naive Bayes over {x, y} and a univariate over z.
#[test]
fn product_of_naive_bayes_scope() {
    let mut b = SpnBuilder::new(vec![2, 2, 2], 0);
    let comps: Vec<NodeId> = (0..2)
        .map(|_| {
            let x = b.uniform_univariate(0);
            let y = b.uniform_univariate(1);
            b.product(vec![x, y])
        })
        .collect();
    let nb = b.sum(comps, vec![0.4, 0.6]);
    let z = b.univariate(2, vec![0.2, 0.8]);
    let root = b.product(vec![nb, z]);
    let g = b.build(vec![root]).unwrap();
    let scopes = compute_scopes(&g, &[]).unwrap();
    let expect: Scope = (0..3).fold(Scope::empty(), |s, v| s.union(&Scope::var(v)));
    assert_eq!(scopes[root.0], expect);
    assert_eq!(oracle_scopes(&g)[root.0], BTreeSet::from([0, 1, 2]));
    assert!(check_validity(&g, &[]).unwrap().is_valid());
}

#[test]
fn naive_bayes_conditional_against_joint_table() {
    // Class c with two values, features a, b independent given c.
    let prior = [0.3, 0.7];
    let pa = [[0.9, 0.1], [0.2, 0.8]];
    let pb = [[0.6, 0.4], [0.25, 0.75]];
    let mut bld = SpnBuilder::new(vec![2, 2], 0);
    let comps: Vec<NodeId> = (0..2)
        .map(|c| {
            let a = bld.univariate(0, pa[c].to_vec());
            let b = bld.univariate(1, pb[c].to_vec());
            bld.product(vec![a, b])
        })
        .collect();
    let root = bld.sum(comps, prior.to_vec());
    let g = bld.build(vec![root]).unwrap();
    let joint = |a: usize, b: usize| (0..2).map(|c| prior[c] * pa[c][a] * pb[c][b]).sum::<f64>();
    for a in 0..2 {
        for b in 0..2 {
            let want = joint(a, b) / (joint(0, b) + joint(1, b));
            let q = Evidence::marginal(2).with(0, a as u32);
            let e = Evidence::marginal(2).with(1, b as u32);
            let got = conditional_query(&g, &q, &e).unwrap();
            assert!((got - want).abs() < 1e-9 * want);
        }
    }
    let q = Evidence::marginal(2).with(0, 1);
    let marginal = conditional_query(&g, &q, &Evidence::marginal(2)).unwrap();
    assert!((marginal - (joint(1, 0) + joint(1, 1))).abs() < 1e-12);
    assert!(matches!(conditional_query(&g, &q, &q), Err(Error::Disjointness(0))));
}
