use std::collections::BTreeSet;

use dspn_core::dspn::{
    check_invariance, derive_bottom, sample, sequence_loglik, stack_templates, unroll, verify_stacking, DspnModel,
    InvarianceViolation, ScopeAssignment, TemplateNetwork, TopNetwork,
};
use dspn_core::hmm::DiscreteHmm;
use dspn_core::logspace;
use dspn_core::spn::{
    check_validity, compute_scopes, conditional_query, evaluate, validity_from_scopes, Evidence, Node, NodeId,
    SpnBuilder, SpnGraph,
};
use dspn_testkit::{
    enumerate_sequence_probability, random_arities, random_evidence, random_model, random_template, rel_err, rng,
};
use proptest::prelude::*;
use rand::Rng;

fn random_sequence(m: &DspnModel, t: usize, p_obs: f64, r: &mut impl Rng) -> Vec<Evidence> {
    (0..t).map(|_| random_evidence(m.arities(), p_obs, r)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn stacking_premises_make_every_unrolling_valid(seed in any::<u64>(), n in 1usize..=4, k in 1usize..=4) {
        let mut r = rng(seed);
        let m = random_model(&random_arities(n, 3, &mut r), k, &mut r);
        prop_assert!(verify_stacking(&m).unwrap().is_valid());
        for t in 1..=20 {
            let g = unroll(&m, t).unwrap();
            prop_assert!(check_validity(&g, &[]).unwrap().is_valid(), "T = {}", t);
        }
    }

    #[test]
    fn stacked_templates_stay_invariant(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=4, copies in 1usize..=10) {
        let mut r = rng(seed);
        let t = random_template(&random_arities(n, 3, &mut r), k, &mut r);
        let a = ScopeAssignment::single(k);
        prop_assert!(check_invariance(&t, &a).unwrap().is_invariant());
        let stacked = stack_templates(&t, copies).unwrap();
        prop_assert!(check_invariance(&stacked, &a).unwrap().is_invariant());
    }

    /// Renaming the atoms of the input classes by a bijection flags the same
    /// nodes, whatever the class structure.
    #[test]
    fn atom_relabeling_preserves_validity(seed in any::<u64>(), n in 1usize..=3, k in 2usize..=5) {
        let mut r = rng(seed);
        let t = random_template(&random_arities(n, 2, &mut r), k, &mut r);
        let labels: Vec<usize> = (0..k).map(|_| r.random_range(0..k)).collect();
        let a = ScopeAssignment::from_labels(&labels);
        let c = a.n_classes();
        let identity: Vec<usize> = (0..c).collect();
        let mut perm = identity.clone();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let flagged = |atoms: &[usize]| -> BTreeSet<usize> {
            let scopes = compute_scopes(t.graph(), &a.input_scopes_with(atoms)).unwrap();
            validity_from_scopes(t.graph(), &scopes).flagged_nodes().into_iter().map(|n| n.0).collect()
        };
        prop_assert_eq!(flagged(&identity), flagged(&perm));
    }

    #[test]
    fn rolling_matches_unrolled(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=3, t in prop::sample::select(vec![1usize, 2, 5, 9])) {
        let mut r = rng(seed);
        let m = random_model(&random_arities(n, 3, &mut r), k, &mut r);
        let seq = random_sequence(&m, t, 0.7, &mut r);
        let rolled = sequence_loglik(&m, &seq).unwrap();
        let flat = evaluate(&unroll(&m, t).unwrap(), &Evidence::concat(&seq), &[]).unwrap()[0];
        prop_assert!((rolled - flat).abs() <= 1e-12 * flat.abs().max(1.0));
    }

    #[test]
    fn unrolled_node_count(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=4, t in 1usize..=12) {
        let mut r = rng(seed);
        let m = random_model(&random_arities(n, 2, &mut r), k, &mut r);
        let g = unroll(&m, t).unwrap();
        let direct = m.bottom().graph().len() + (t - 1) * (m.template().graph().len() - k) + m.top().graph().len() - k;
        prop_assert_eq!(g.len(), direct);
        prop_assert_eq!(g.n_vars(), n * t);
        prop_assert_eq!(g.n_interface_inputs(), 0);
        prop_assert_eq!(g.roots().len(), 1);
    }

    #[test]
    fn bottom_drops_exactly_the_indicator_free_nodes(seed in any::<u64>(), n in 1usize..=4, k in 1usize..=4) {
        let mut r = rng(seed);
        let t = random_template(&random_arities(n, 3, &mut r), k, &mut r);
        let g = t.graph();
        fn has_indicator(g: &SpnGraph, id: NodeId) -> bool {
            match g.node(id) {
                Node::Indicator { .. } => true,
                Node::InterfaceInput { .. } => false,
                n => n.children().iter().any(|c| has_indicator(g, *c)),
            }
        }
        let dead = (0..g.len()).filter(|&i| !has_indicator(g, NodeId(i))).count();
        let bottom = derive_bottom(&t).unwrap();
        prop_assert_eq!(bottom.graph().len(), g.len() - dead);
        prop_assert!(bottom.graph().is_normalized());
    }
}

#[test]
fn sequence_likelihood_matches_enumeration() {
    let mut r = rng(11);
    for _ in 0..20 {
        let m = random_model(&[2, 2], r.random_range(1..=3), &mut r);
        let t = r.random_range(1..=4);
        let seq = random_sequence(&m, t, 0.5, &mut r);
        let want = enumerate_sequence_probability(&m, &seq);
        let got = logspace::exp(sequence_loglik(&m, &seq).unwrap());
        assert!(rel_err(got, want, 1e-300) < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn single_slice_is_bottom_capped_by_top() {
    let mut r = rng(5);
    let m = random_model(&[3, 2], 2, &mut r);
    let g = unroll(&m, 1).unwrap();
    assert_eq!(g.len(), m.bottom().graph().len() + m.top().graph().len() - 2);
    let ev = Evidence::observed(&[1, 0]);
    let b = evaluate(m.bottom().graph(), &ev, &[]).unwrap();
    let top = evaluate(m.top().graph(), &Evidence::marginal(2), &b).unwrap()[0];
    assert!((sequence_loglik(&m, &[ev]).unwrap() - top).abs() < 1e-15);
}

fn initial_template(n: usize, k: usize) -> TemplateNetwork {
    let mut b = SpnBuilder::new(vec![2; n], k);
    let inputs: Vec<NodeId> = (0..k).map(|s| b.input(s)).collect();
    let roots = (0..k)
        .map(|_| {
            let mut cs: Vec<NodeId> = (0..n).map(|v| b.univariate(v, vec![0.3, 0.7])).collect();
            cs.push(b.sum(inputs.clone(), vec![1.0 / k as f64; k]));
            b.product(cs)
        })
        .collect();
    TemplateNetwork::with_identity_map(b.build(roots).unwrap()).unwrap()
}

#[test]
fn three_slice_unrolling_of_factored_model() {
    let t = initial_template(2, 2);
    let bottom = derive_bottom(&t).unwrap();
    let m = DspnModel::new(bottom, t, TopNetwork::uniform(vec![2, 2], 2).unwrap()).unwrap();
    let g = unroll(&m, 3).unwrap();
    assert_eq!(g.n_vars(), 6);
    assert!(check_validity(&g, &[]).unwrap().is_valid());
}

#[test]
fn factored_bottom_is_product_of_univariates() {
    let t = initial_template(3, 1);
    let b = derive_bottom(&t).unwrap();
    let g = b.graph();
    let root = g.node(g.roots()[0]);
    assert_eq!(root.children().len(), 3);
    assert!(root.children().iter().all(|c| g.node(*c).children().iter().all(|l| g.node(*l).is_leaf())));
    assert!(g.interface_inputs().is_empty());
}

/// Root 0 leaves out variable 1 while root 1 covers it: the outputs of one
/// input class have different scopes.
#[test]
fn unequal_root_scopes_break_invariance() {
    let mut b = SpnBuilder::new(vec![2, 2], 2);
    let i0 = b.input(0);
    let i1 = b.input(1);
    let x0 = b.uniform_univariate(0);
    let m0 = b.sum(vec![i0, i1], vec![0.5, 0.5]);
    let r0 = b.product(vec![x0, m0]);
    let x0b = b.uniform_univariate(0);
    let x1 = b.uniform_univariate(1);
    let m1 = b.sum(vec![i0, i1], vec![0.5, 0.5]);
    let r1 = b.product(vec![x0b, x1, m1]);
    let t = TemplateNetwork::with_identity_map(b.build(vec![r0, r1]).unwrap()).unwrap();
    let report = check_invariance(&t, &ScopeAssignment::single(2)).unwrap();
    assert!(report.violations.contains(&InvarianceViolation::EqualityNotPreserved { i: 0, j: 1 }));
    // Direct scope enumeration confirms the outputs differ.
    let s = compute_scopes(t.graph(), &ScopeAssignment::single(2).input_scopes()).unwrap();
    assert_ne!(s[r0.0].vars, s[r1.0].vars);
}

#[test]
fn width_one_template_only_needs_local_validity() {
    let t = initial_template(2, 1);
    let report = check_invariance(&t, &ScopeAssignment::single(1)).unwrap();
    assert!(report.is_invariant());
}

#[test]
fn deterministic_model_samples_one_sequence() {
    let h = DiscreteHmm::new(
        vec![1.0, 0.0],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        vec![2],
    )
    .unwrap();
    let m = h.to_dspn().unwrap();
    let mut r = rng(0);
    let first = sample(&m, 7, &mut r).unwrap();
    for _ in 0..50 {
        assert_eq!(sample(&m, 7, &mut r).unwrap(), first);
    }
}

#[test]
fn two_slice_sample_marginal() {
    let mut r = rng(21);
    let m = random_model(&[2], 2, &mut r);
    let g = unroll(&m, 2).unwrap();
    let exact = conditional_query(&g, &Evidence::marginal(2).with(1, 1), &Evidence::marginal(2)).unwrap();
    let n = 100_000;
    let hits = (0..n).filter(|_| sample(&m, 2, &mut r).unwrap()[1][0] == 1).count();
    assert!((hits as f64 / n as f64 - exact).abs() < 0.01);
}

#[test]
fn slice_marginals_within_three_standard_errors() {
    let mut r = rng(22);
    let m = random_model(&[2, 3], 2, &mut r);
    let t = 3;
    let g = unroll(&m, t).unwrap();
    let n = 100_000;
    let draws: Vec<Vec<Vec<u32>>> = (0..n).map(|_| sample(&m, t, &mut r).unwrap()).collect();
    for slice in 0..t {
        for (v, &a) in m.arities().iter().enumerate() {
            for x in 0..a as u32 {
                let q = Evidence::marginal(2 * t).with(slice * 2 + v, x);
                let p = conditional_query(&g, &q, &Evidence::marginal(2 * t)).unwrap();
                let freq = draws.iter().filter(|s| s[slice][v] == x).count() as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se + 1e-12, "slice {slice} var {v} value {x}: {freq} vs {p}");
            }
        }
    }
}

#[test]
fn samples_score_above_uniform_sequences() {
    let mut r = rng(23);
    let m = random_model(&[3, 3], 3, &mut r);
    let t = 6;
    let mean = |seqs: &[Vec<Vec<u32>>]| {
        seqs.iter()
            .map(|s| sequence_loglik(&m, &s.iter().map(|x| Evidence::observed(x)).collect::<Vec<_>>()).unwrap())
            .sum::<f64>()
            / seqs.len() as f64
    };
    let sampled: Vec<_> = (0..2000).map(|_| sample(&m, t, &mut r).unwrap()).collect();
    let uniform: Vec<_> =
        (0..2000).map(|_| (0..t).map(|_| vec![r.random_range(0..3), r.random_range(0..3)]).collect()).collect();
    assert!(mean(&sampled) >= mean(&uniform));
}

#[test]
fn overlapping_bottom_roots_fail_premise() {
    // Bottom roots over {0,1} and {1,2}: neither equal nor disjoint.
    let mut b = SpnBuilder::new(vec![2, 2, 2], 0);
    let x = [b.uniform_univariate(0), b.uniform_univariate(1), b.uniform_univariate(2)];
    let x1b = b.uniform_univariate(1);
    let r0 = b.product(vec![x[0], x[1]]);
    let r1 = b.product(vec![x1b, x[2]]);
    let bottom = dspn_core::dspn::BottomNetwork::new(b.build(vec![r0, r1]).unwrap()).unwrap();
    let t = initial_template(3, 2);
    let m = DspnModel::new_unchecked(bottom, t, TopNetwork::uniform(vec![2, 2, 2], 2).unwrap()).unwrap();
    let report = verify_stacking(&m).unwrap();
    assert_eq!(report.overlapping_bottom_roots, vec![(0, 1)]);
    assert!(!report.is_valid());
}
