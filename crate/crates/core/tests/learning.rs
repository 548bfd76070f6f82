use std::collections::BTreeSet;

use dspn_core::data::SequenceDataset;
use dspn_core::dspn::{
    check_invariance, sample, sequence_loglik, unroll_with_map, verify_stacking, DspnModel, Part, ScopeAssignment,
};
use dspn_core::hmm::{baum_welch, hmm_dataset, reversed, BaumWelchConfig, DiscreteHmm};
use dspn_core::learn::params::{
    collect_statistics, dataset_loglik, em_step, log_prior, tied_weight_gradient, train, Method, TrainConfig,
};
use dspn_core::learn::structure::{
    effective_scopes, generate_neighbour, initial_structure, learn_structure, search, SearchConfig, SearchState,
};
use dspn_core::logspace;
use dspn_core::partition::{IndependenceOracle, ScopeElem};
use dspn_core::spn::{backward, compute_scopes, for_each_edge, forward, Evidence, Node};
use dspn_testkit::{random_arities, random_model, rel_err, rng};
use rand::Rng;

const PARTS: [Part; 3] = [Part::Bottom, Part::Template, Part::Top];

fn sampled_data(m: &DspnModel, count: usize, max_len: usize, r: &mut impl Rng) -> SequenceDataset {
    let seqs = (0..count)
        .map(|_| {
            let t = r.random_range(1..=max_len);
            sample(m, t, r).unwrap().iter().map(|s| Evidence::observed(s)).collect()
        })
        .collect();
    SequenceDataset::new("sampled", m.arities().to_vec(), seqs).unwrap()
}

#[test]
fn em_never_decreases_likelihood() {
    let mut r = rng(1);
    for case in 0..20 {
        let arities = random_arities(r.random_range(1..=3), 3, &mut r);
        let k = r.random_range(1..=3);
        let source = random_model(&arities, k, &mut r);
        let data = sampled_data(&source, 30, 8, &mut r);
        let mut m = random_model(&arities, k, &mut r);
        let cfg = TrainConfig { laplace_alpha: 0.0, ..Default::default() };
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..50 {
            let (next, ll) = em_step(&m, &data, &cfg).unwrap();
            assert!(ll >= prev - 1e-8, "case {case}: {prev} then {ll}");
            assert!(next.is_normalized());
            prev = ll;
            m = next;
        }
    }
}

#[test]
fn smoothed_em_never_decreases_penalized_likelihood() {
    let mut r = rng(2);
    for _ in 0..5 {
        let arities = random_arities(2, 3, &mut r);
        let source = random_model(&arities, 2, &mut r);
        let data = sampled_data(&source, 20, 6, &mut r);
        let mut m = random_model(&arities, 2, &mut r);
        let cfg = TrainConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..30 {
            let (next, ll) = em_step(&m, &data, &cfg).unwrap();
            let objective = ll + log_prior(&m, cfg.laplace_alpha);
            assert!(objective >= prev - 1e-8);
            prev = objective;
            m = next;
        }
    }
}

/// Per-edge counts and gradients recomputed on the materialized unrolled
/// graph, folded back onto the part each copy came from.
fn unrolled_statistics(m: &DspnModel, data: &SequenceDataset) -> [(Vec<f64>, Vec<f64>); 3] {
    let mut out = PARTS.map(|p| (vec![0.0; m.graph(p).n_edges()], vec![0.0; m.graph(p).n_edges()]));
    for seq in &data.sequences {
        let (g, map) = unroll_with_map(m, seq.len()).unwrap();
        let f = forward(&g, &Evidence::concat(seq), &[]).unwrap();
        let s = f.values[g.roots()[0].0];
        let d = backward(&g, &f.values, &[0.0]);
        for_each_edge(&g, &f.values, &d, |e, node, _, lw, dn, vc| {
            let (part, _, orig) = map.origin[node.0];
            let j = e - g.edge_offset(node);
            let pe = m.graph(part).edge_offset(orig) + j;
            let slot = PARTS.iter().position(|&p| p == part).unwrap();
            out[slot].0[pe] += logspace::exp(lw + dn + vc - s);
            out[slot].1[pe] += logspace::exp(dn + vc - s);
        });
    }
    out
}

#[test]
fn rolling_statistics_equal_unrolled_statistics() {
    let mut r = rng(3);
    for _ in 0..15 {
        let arities = random_arities(r.random_range(1..=3), 3, &mut r);
        let k = r.random_range(1..=3);
        let m = random_model(&arities, k, &mut r);
        let source = random_model(&arities, k, &mut r);
        let mut data = sampled_data(&source, 6, 8, &mut r);
        data.sequences[0][0].set(0, None);
        let rolled = collect_statistics(&m, &data).unwrap();
        let oracle = unrolled_statistics(&m, &data);
        for (i, &p) in PARTS.iter().enumerate() {
            let st = rolled.part(p);
            for e in 0..st.counts.len() {
                assert!(rel_err(st.counts[e], oracle[i].0[e], 1e-12) < 1e-9, "{p:?} edge {e}");
                assert!(rel_err(st.gradient[e], oracle[i].1[e], 1e-12) < 1e-9, "{p:?} edge {e}");
            }
        }
    }
}

#[test]
fn tied_gradient_matches_finite_differences() {
    let mut r = rng(4);
    for _ in 0..10 {
        let arities = random_arities(2, 3, &mut r);
        let m = random_model(&arities, r.random_range(1..=3), &mut r);
        let data = sampled_data(&random_model(&arities, m.k(), &mut r), 4, 5, &mut r);
        let data = SequenceDataset::new(
            "t5",
            arities.clone(),
            data.sequences.into_iter().map(|s| s.into_iter().cycle().take(5).collect()).collect(),
        )
        .unwrap();
        let grad = tied_weight_gradient(&m, &data).unwrap();
        let h = 1e-6;
        for p in PARTS {
            let w = m.graph(p).weights();
            for e in 0..w.len() {
                let shifted = |delta: f64| {
                    let mut probe = m.clone();
                    let mut wp = w.clone();
                    wp[e] += delta;
                    probe.graph_mut(p).set_weights(&wp).unwrap();
                    dataset_loglik(&probe, &data).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = grad.part(p).gradient[e];
                assert!(rel_err(an, fd, 1e-3) < 1e-4, "{p:?} edge {e}: {an} vs {fd}");
            }
        }
    }
}

#[test]
fn zero_iterations_and_monotone_acceptance() {
    let mut r = rng(5);
    let arities = vec![2, 3];
    let m = random_model(&arities, 2, &mut r);
    let data = sampled_data(&random_model(&arities, 2, &mut r), 20, 6, &mut r);
    let out = train(&m, &data, &TrainConfig { iterations: 0, ..Default::default() }).unwrap();
    assert_eq!(out.model, m);
    let before = dataset_loglik(&m, &data).unwrap();
    for method in [Method::Em, Method::Gradient] {
        let out = train(&m, &data, &TrainConfig { method, iterations: 25, ..Default::default() }).unwrap();
        assert!(out.loglik >= before);
        assert!((dataset_loglik(&out.model, &data).unwrap() - out.loglik).abs() < 1e-9);
        assert!(out.model.is_normalized());
    }
}

/// Transition rows and emission tables read back from an encoded HMM.
fn decode(m: &DspnModel) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let g = m.template().graph();
    let mut trans = Vec::new();
    let mut emit = Vec::new();
    for slot in 0..m.k() {
        let root = m.template().output_for_slot(slot);
        for c in g.node(root).children() {
            if let Node::Sum { children, weights } = g.node(*c) {
                if matches!(g.node(children[0]), Node::InterfaceInput { .. }) {
                    let mut row = vec![0.0; m.k()];
                    for (ch, w) in children.iter().zip(weights) {
                        if let Node::InterfaceInput { slot } = g.node(*ch) {
                            row[*slot] = *w;
                        }
                    }
                    trans.push(row);
                } else {
                    let mut dist = vec![0.0; weights.len()];
                    for (ch, w) in children.iter().zip(weights) {
                        if let Node::Indicator { value, .. } = g.node(*ch) {
                            dist[*value as usize] = *w;
                        }
                    }
                    emit.push(dist);
                }
            }
        }
    }
    (trans, emit)
}

fn max_diff_up_to_swap(est: &(Vec<Vec<f64>>, Vec<Vec<f64>>), a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diff = |perm: [usize; 2]| -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((est.0[perm[i]][perm[j]] - a[i][j]).abs());
                d = d.max((est.1[perm[i]][j] - b[i][j]).abs());
            }
        }
        d
    };
    diff([0, 1]).min(diff([1, 0]))
}

#[test]
fn encoded_hmm_recovers_generating_parameters() {
    let truth = DiscreteHmm::new(
        vec![0.6, 0.4],
        vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        vec![vec![vec![0.9, 0.1]], vec![vec![0.2, 0.8]]],
        vec![2],
    )
    .unwrap();
    let mut r = rng(6);
    let data = hmm_dataset(&truth, 500, 100, &mut r);
    let flipped = SequenceDataset::new("rev", vec![2], data.sequences.iter().map(|s| reversed(s)).collect()).unwrap();
    let init = DiscreteHmm::random(2, vec![2], &mut r).to_dspn().unwrap();
    let out = train(&init, &flipped, &TrainConfig { iterations: 300, laplace_alpha: 0.0, convergence_tol: 1e-10, ..Default::default() })
        .unwrap();
    let est = decode(&out.model);
    let emissions: Vec<Vec<f64>> = truth.emissions.iter().map(|e| e[0].clone()).collect();
    let d = max_diff_up_to_swap(&est, &truth.transition, &emissions);
    assert!(d < 0.05, "max deviation from truth {d}");

    let bw = baum_welch(&data, 2, &BaumWelchConfig { iterations: 300, alpha: 0.0, tolerance: 1e-10, seed: 1 }).unwrap();
    let bw_emit: Vec<Vec<f64>> = bw.hmm.emissions.iter().map(|e| e[0].clone()).collect();
    assert!(max_diff_up_to_swap(&est, &bw.hmm.transition, &bw_emit) < 0.05);
}

#[test]
fn em_converges_on_hmm_data() {
    let mut r = rng(7);
    let truth = DiscreteHmm::random(2, vec![2], &mut r);
    let data = hmm_dataset(&truth, 200, 50, &mut r);
    let (tr, va) = data.split(0.15).unwrap();
    let cfg = SearchConfig { max_k: 2, ..Default::default() };
    let init = initial_structure(&tr, &va, &cfg, &mut r).unwrap();
    let out = train(&init.model, &data, &TrainConfig { iterations: 200, convergence_tol: 1e-6, ..Default::default() }).unwrap();
    assert!(out.converged, "no convergence in {} iterations", out.history.len());
}

#[test]
fn initial_structure_satisfies_stacking_premises() {
    let mut r = rng(8);
    let truth = DiscreteHmm::random(3, vec![2, 3], &mut r);
    let data = hmm_dataset(&truth, 60, 20, &mut r);
    let (tr, va) = data.split(0.2).unwrap();
    let init = initial_structure(&tr, &va, &SearchConfig { max_k: 4, ..Default::default() }, &mut r).unwrap();
    assert!(verify_stacking(&init.model).unwrap().is_valid());
    assert!(init.model.k() >= 1 && init.model.k() <= 4);
    let g = init.model.template().graph();
    for &root in g.roots() {
        assert_eq!(g.node(root).children().len(), 3);
    }
}

#[test]
fn neighbours_preserve_scopes_and_invariance() {
    let mut r = rng(9);
    let truth = DiscreteHmm::random(2, vec![2, 2, 3], &mut r);
    let data = hmm_dataset(&truth, 40, 10, &mut r);
    let (tr, va) = data.split(0.25).unwrap();
    let cfg = SearchConfig { max_k: 2, ..Default::default() };
    let init = initial_structure(&tr, &va, &cfg, &mut r).unwrap();
    let oracle = IndependenceOracle::from_dataset(&tr, cfg.significance);
    let mut state = SearchState::new(init.model, init.validation_ll, 3);
    let mut saw_mixed_block = false;
    for step in 0..150 {
        let old = state.current.template().clone();
        let nb = generate_neighbour(&mut state, &oracle, &cfg).unwrap();
        let new = nb.model.template();
        let a = ScopeAssignment::single(new.k());
        assert!(check_invariance(new, &a).unwrap().is_invariant());
        assert!(verify_stacking(&nb.model).unwrap().is_valid());

        let old_scopes = compute_scopes(old.graph(), &a.input_scopes()).unwrap();
        let new_scopes = compute_scopes(new.graph(), &a.input_scopes()).unwrap();
        for (i, m) in nb.remap.iter().enumerate() {
            if let Some(j) = m {
                assert_eq!(old_scopes[i], new_scopes[j.0], "node {i} changed scope");
            }
        }

        let eff = effective_scopes(new).unwrap();
        let replaced = nb.remap[nb.replaced.0].unwrap();
        let children = new.graph().node(replaced).children().to_vec();
        assert_eq!(children.len(), nb.partition.len());
        for (c, block) in children.iter().zip(nb.partition.blocks()) {
            let got: BTreeSet<ScopeElem> = eff[c.0].iter().copied().collect();
            assert_eq!(got, block.iter().copied().collect::<BTreeSet<_>>());
            if block.len() > 1 {
                saw_mixed_block |= block.contains(&ScopeElem::Interface);
                let Node::Sum { children: comps, .. } = new.graph().node(*c) else { panic!("block is not a mixture") };
                assert_eq!(comps.len(), cfg.nb_components);
                for comp in comps {
                    assert_eq!(new.graph().node(*comp).children().len(), block.len());
                }
            } else {
                assert!(new.graph().node(*c).is_sum());
            }
        }
        // Walk the search forward on every other step so later neighbours
        // start from grown structures.
        if step % 2 == 0 {
            state.current = nb.model;
        }
    }
    assert!(saw_mixed_block);
}

#[test]
fn patience_one_stops_at_first_rejection() {
    let mut r = rng(10);
    let truth = DiscreteHmm::random(2, vec![2], &mut r);
    let data = hmm_dataset(&truth, 60, 20, &mut r);
    let (tr, va) = data.split(0.2).unwrap();
    let cfg = SearchConfig { patience: 1, max_iters: 100, em_iters: 5, max_k: 3, ..Default::default() };
    let out = search(&tr, &va, &cfg).unwrap();
    let rejected: Vec<_> = out.trace.iter().filter(|row| !row.accepted).collect();
    assert_eq!(rejected.len(), 1);
    assert!(!out.trace.last().unwrap().accepted);
    assert!((dataset_loglik(&out.model, &va).unwrap() - out.validation_ll).abs() < 1e-9);
}

#[test]
fn search_keeps_best_score_current() {
    let mut r = rng(11);
    let truth = DiscreteHmm::random(2, vec![3], &mut r);
    let data = hmm_dataset(&truth, 50, 15, &mut r);
    let cfg = SearchConfig { max_iters: 15, em_iters: 5, max_k: 3, ..Default::default() };
    let out = learn_structure(&data, &cfg, &mut ()).unwrap();
    let (_, va) = data.split(cfg.validation_fraction).unwrap();
    assert!((dataset_loglik(&out.model, &va).unwrap() - out.validation_ll).abs() < 1e-9);
    let best = out.trace.iter().filter(|row| row.accepted).map(|row| row.validation_ll).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, out.validation_ll);
    assert!(out.trace.iter().all(|row| row.validation_ll <= out.validation_ll));
    let seq: Vec<Evidence> = data.sequences[0].clone();
    assert!(sequence_loglik(&out.model, &seq).unwrap().is_finite());
}
