//! Search-and-score learning of the template network: a factored initial
//! template grown one interface slot at a time, then hill climbing over
//! neighbours that re-partition one product node.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{dataset_loglik, train, TrainConfig};
use crate::data::SequenceDataset;
use crate::dspn::{derive_bottom, DspnModel, ScopeAssignment, TemplateNetwork, TopNetwork};
use crate::partition::{get_partition, CursorStore, IndependenceOracle, Partition, ScopeElem};
use crate::spn::{compute_scopes, Node, NodeId, SpnGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Scopes larger than this are split by independence tests instead of
    /// lexicographic enumeration.
    pub threshold: usize,
    /// Consecutive rejected neighbours before the search stops.
    pub patience: usize,
    pub max_iters: usize,
    /// Upper bound on the interface width grown by the initial structure.
    pub max_k: usize,
    /// Parameter-learning iterations spent on each candidate.
    pub em_iters: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Mixture components of each naive Bayes block.
    pub nb_components: usize,
    /// Significance level of the pairwise independence tests.
    pub significance: f64,
    /// Training used for the initial structure and, with `em_iters`, for
    /// candidates.
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            threshold: 6,
            patience: 10,
            max_iters: 200,
            max_k: 16,
            em_iters: 20,
            validation_fraction: 0.15,
            seed: 0,
            nb_components: 2,
            significance: 0.05,
            train: TrainConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::Config("threshold must be at least 1"));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1"));
        }
        if self.max_k < 1 {
            return Err(Error::Config("max_k must be at least 1"));
        }
        if self.nb_components < 1 {
            return Err(Error::Config("nb_components must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)"));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::Config("significance must lie in (0, 1)"));
        }
        self.train.validate()
    }

    fn candidate_training(&self) -> TrainConfig {
        TrainConfig { iterations: self.em_iters, ..self.train.clone() }
    }
}

/// Random positive weights near uniform, so that freshly created components
/// are not exact copies of each other.
fn jittered<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| 0.5 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Mutable node list with shared indicator and input leaves.
struct Editor {
    nodes: Vec<Node>,
    arities: Vec<usize>,
    indicators: BTreeMap<(usize, u32), NodeId>,
    inputs: Vec<NodeId>,
}

impl Editor {
    fn new(nodes: Vec<Node>, arities: Vec<usize>, k: usize) -> Self {
        let mut e = Editor { nodes, arities, indicators: BTreeMap::new(), inputs: vec![NodeId(usize::MAX); k] };
        for (i, n) in e.nodes.iter().enumerate() {
            match n {
                Node::Indicator { var, value } => {
                    e.indicators.entry((*var, *value)).or_insert(NodeId(i));
                }
                Node::InterfaceInput { slot } => e.inputs[*slot] = NodeId(i),
                _ => {}
            }
        }
        for slot in 0..k {
            if e.inputs[slot].0 == usize::MAX {
                e.inputs[slot] = e.push(Node::InterfaceInput { slot });
            }
        }
        e
    }

    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        NodeId(self.nodes.len() - 1)
    }

    fn univariate<R: Rng + ?Sized>(&mut self, var: usize, rng: &mut R) -> NodeId {
        let a = self.arities[var];
        let children: Vec<NodeId> = (0..a as u32)
            .map(|x| match self.indicators.get(&(var, x)) {
                Some(&id) => id,
                None => {
                    let id = self.push(Node::Indicator { var, value: x });
                    self.indicators.insert((var, x), id);
                    id
                }
            })
            .collect();
        let weights = jittered(a, rng);
        self.push(Node::Sum { children, weights })
    }

    fn interface_mixture<R: Rng + ?Sized>(&mut self, rng: &mut R) -> NodeId {
        let children = self.inputs.clone();
        let weights = jittered(children.len(), rng);
        self.push(Node::Sum { children, weights })
    }

    fn factor<R: Rng + ?Sized>(&mut self, e: ScopeElem, rng: &mut R) -> NodeId {
        match e {
            ScopeElem::Var(v) => self.univariate(v, rng),
            ScopeElem::Interface => self.interface_mixture(rng),
        }
    }

    /// Mixture of `components` fully factored distributions over `block`;
    /// a singleton block is just its factor.
    fn naive_bayes<R: Rng + ?Sized>(&mut self, block: &[ScopeElem], components: usize, rng: &mut R) -> NodeId {
        if block.len() == 1 {
            return self.factor(block[0], rng);
        }
        let children: Vec<NodeId> = (0..components)
            .map(|_| {
                let factors = block.iter().map(|&e| self.factor(e, rng)).collect();
                self.push(Node::Product { children: factors })
            })
            .collect();
        let weights = vec![1.0 / components as f64; components];
        self.push(Node::Sum { children, weights })
    }

    /// Drops inner nodes unreachable from `roots`, keeping relative order and
    /// every leaf. Returns the graph and the old-to-new id map.
    fn finish(self, roots: &[NodeId], k: usize) -> Result<(SpnGraph, Vec<Option<NodeId>>)> {
        let mut live = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.to_vec();
        while let Some(id) = stack.pop() {
            if !core::mem::replace(&mut live[id.0], true) {
                stack.extend_from_slice(self.nodes[id.0].children());
            }
        }
        let mut remap = vec![None; self.nodes.len()];
        let mut next = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if live[i] || n.is_leaf() {
                remap[i] = Some(NodeId(next));
                next += 1;
            }
        }
        let nodes = self
            .nodes
            .into_iter()
            .enumerate()
            .filter(|(i, _)| remap[*i].is_some())
            .map(|(_, n)| match n {
                Node::Sum { children, weights } => Node::Sum {
                    children: children.iter().map(|c| remap[c.0].expect("live child")).collect(),
                    weights,
                },
                Node::Product { children } => Node::Product {
                    children: children.iter().map(|c| remap[c.0].expect("live child")).collect(),
                },
                leaf => leaf,
            })
            .collect();
        let roots = roots.iter().map(|r| remap[r.0].expect("root is live")).collect();
        Ok((SpnGraph::new(nodes, roots, self.arities, k)?, remap))
    }
}

/// Initial template with `k` roots: root `i` is the product of one
/// univariate distribution per variable and a distribution over the `k`
/// interface inputs.
pub fn factored_template<R: Rng + ?Sized>(arities: &[usize], k: usize, rng: &mut R) -> Result<TemplateNetwork> {
    if k == 0 {
        return Err(Error::Config("interface width must be positive"));
    }
    let mut e = Editor::new(Vec::new(), arities.to_vec(), k);
    let roots: Vec<NodeId> = (0..k).map(|_| add_factored_root(&mut e, rng)).collect();
    let (g, _) = e.finish(&roots, k)?;
    TemplateNetwork::with_identity_map(g)
}

fn add_factored_root<R: Rng + ?Sized>(e: &mut Editor, rng: &mut R) -> NodeId {
    let mut children: Vec<NodeId> = (0..e.arities.len()).map(|v| e.univariate(v, rng)).collect();
    children.push(e.interface_mixture(rng));
    e.push(Node::Product { children })
}

fn mixes_inputs_only(nodes: &[Node], children: &[NodeId]) -> bool {
    children.iter().all(|c| matches!(nodes[c.0], Node::InterfaceInput { .. }))
}

/// Adds interface slot `k` and a new factored root feeding it. Existing
/// interface mixtures give the new slot weight `1/(k+1)` and keep their
/// learned weights, scaled, for the old slots.
fn grow_template<R: Rng + ?Sized>(t: &TemplateNetwork, rng: &mut R) -> Result<TemplateNetwork> {
    let k = t.k();
    let (nodes, roots, arities, _) = t.graph().clone().into_parts();
    let mut e = Editor::new(nodes, arities, k + 1);
    let new_input = e.inputs[k];
    let scale = k as f64 / (k + 1) as f64;
    for i in 0..e.nodes.len() {
        if let Node::Sum { children, .. } = &e.nodes[i] {
            if !mixes_inputs_only(&e.nodes, children) {
                continue;
            }
            if let Node::Sum { children, weights } = &mut e.nodes[i] {
                weights.iter_mut().for_each(|w| *w *= scale);
                weights.push(1.0 - scale);
                children.push(new_input);
            }
        }
    }
    let mut roots = roots;
    roots.push(add_factored_root(&mut e, rng));
    let mut f_map = t.f_map().to_vec();
    f_map.push(k);
    let (g, _) = e.finish(&roots, k + 1)?;
    TemplateNetwork::new(g, f_map)
}

fn grow_top(top: &TopNetwork, arities: &[usize]) -> Result<TopNetwork> {
    let g = top.graph();
    let k = top.k();
    let scale = k as f64 / (k + 1) as f64;
    let weights = match g.node(g.roots()[0]) {
        Node::Sum { children, weights }
            if children.len() == k
                && children.iter().enumerate().all(|(s, c)| *g.node(*c) == Node::InterfaceInput { slot: s }) =>
        {
            let mut w: Vec<f64> = weights.iter().map(|w| w * scale).collect();
            w.push(1.0 - scale);
            w
        }
        _ => vec![1.0 / (k + 1) as f64; k + 1],
    };
    TopNetwork::mixture(arities.to_vec(), weights)
}

fn model_from_template(template: TemplateNetwork, top: TopNetwork) -> Result<DspnModel> {
    let bottom = derive_bottom(&template)?;
    DspnModel::new(bottom, template, top)
}

fn check_data(train: &SequenceDataset, validation: &SequenceDataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::DegenerateData("empty training set"));
    }
    if validation.is_empty() {
        return Err(Error::DegenerateData("empty validation set"));
    }
    if train.arities != validation.arities || train.arities.contains(&0) {
        return Err(Error::DegenerateData("inconsistent or zero arities"));
    }
    train.validate()?;
    validation.validate()
}

/// A trained model and its scores.
#[derive(Debug, Clone)]
pub struct Scored {
    pub model: DspnModel,
    pub train_ll: f64,
    pub validation_ll: f64,
}

fn fit_and_score(
    m: &DspnModel,
    train_set: &SequenceDataset,
    validation: &SequenceDataset,
    cfg: &TrainConfig,
) -> Result<Scored> {
    let out = train(m, train_set, cfg)?;
    let validation_ll = dataset_loglik(&out.model, validation)?;
    Ok(Scored { model: out.model, train_ll: out.loglik, validation_ll })
}

/// Factored initial model: starts with one interface slot and keeps adding
/// factored roots, warm-starting the existing weights and retraining, until
/// the validation likelihood drops or `max_k` is reached.
pub fn initial_structure<R: Rng + ?Sized>(
    train_set: &SequenceDataset,
    validation: &SequenceDataset,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<Scored> {
    cfg.validate()?;
    check_data(train_set, validation)?;
    let arities = &train_set.arities;
    let template = factored_template(arities, 1, rng)?;
    let m = model_from_template(template, TopNetwork::uniform(arities.clone(), 1)?)?;
    let mut best = fit_and_score(&m, train_set, validation, &cfg.train)?;
    while best.model.k() < cfg.max_k {
        let template = grow_template(best.model.template(), rng)?;
        let top = grow_top(best.model.top(), arities)?;
        let cand = fit_and_score(&model_from_template(template, top)?, train_set, validation, &cfg.train)?;
        if cand.validation_ll < best.validation_ll {
            break;
        }
        best = cand;
    }
    Ok(best)
}

/// Effective scope of every template node: its variables plus
/// [`ScopeElem::Interface`] when an interface input is reachable.
pub fn effective_scopes(t: &TemplateNetwork) -> Result<Vec<Vec<ScopeElem>>> {
    let scopes = compute_scopes(t.graph(), &ScopeAssignment::single(t.k()).input_scopes())?;
    Ok(scopes
        .into_iter()
        .map(|s| {
            let mut e: Vec<ScopeElem> = s.vars.iter().map(ScopeElem::Var).collect();
            if !s.atoms.is_empty() {
                e.push(ScopeElem::Interface);
            }
            e
        })
        .collect())
}

/// Hill-climbing state. `current` is always the best model found so far.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub current: DspnModel,
    pub best_score: f64,
    pub cursors: CursorStore,
    pub rng: ChaCha8Rng,
    pub iteration: usize,
    pub patience: usize,
}

impl SearchState {
    pub fn new(current: DspnModel, best_score: f64, seed: u64) -> Self {
        SearchState {
            current,
            best_score,
            cursors: CursorStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
            patience: 0,
        }
    }
}

/// Untrained neighbour of the current model.
#[derive(Debug, Clone)]
pub struct Neighbour {
    pub model: DspnModel,
    /// Replaced product node, as numbered in the current template.
    pub replaced: NodeId,
    pub partition: Partition<ScopeElem>,
    /// Current-template id to candidate-template id; `None` for removed
    /// nodes.
    pub remap: Vec<Option<NodeId>>,
}

/// Replaces a uniformly chosen template product node by a product of naive
/// Bayes models, one per block of a partition of its effective scope. The
/// bottom network is re-derived; the top network is kept.
pub fn generate_neighbour(
    state: &mut SearchState,
    oracle: &IndependenceOracle,
    cfg: &SearchConfig,
) -> Result<Neighbour> {
    let t = state.current.template();
    let products: Vec<NodeId> = t.graph().product_nodes().collect();
    if products.is_empty() {
        return Err(Error::Config("template has no product node"));
    }
    let chosen = products[state.rng.random_range(0..products.len())];
    let scope = effective_scopes(t)?.swap_remove(chosen.0);
    let partition = get_partition(&scope, chosen.0, &mut state.cursors, oracle, cfg.threshold, &mut state.rng)?;

    let (nodes, roots, arities, k) = t.graph().clone().into_parts();
    let mut e = Editor::new(nodes, arities, k);
    let blocks: Vec<NodeId> = partition
        .blocks()
        .iter()
        .map(|b| e.naive_bayes(b, cfg.nb_components, &mut state.rng))
        .collect();
    e.nodes[chosen.0] = Node::Product { children: blocks };
    let old_len = t.graph().len();
    let (g, mut remap) = e.finish(&roots, k)?;
    remap.truncate(old_len);
    let template = TemplateNetwork::new(g, t.f_map().to_vec())?;
    let model = model_from_template(template, state.current.top().clone())?;
    Ok(Neighbour { model, replaced: chosen, partition, remap })
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub accepted: bool,
    pub template_node_count: usize,
    pub k: usize,
    pub train_ll: f64,
    pub validation_ll: f64,
    pub seconds: f64,
}

/// Hooks into a running search.
pub trait SearchObserver {
    /// Wall-clock seconds since the search started; reported in the trace.
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }

    /// Called for every scored candidate, the initial model included.
    fn on_candidate(&mut self, _row: &TraceRow, _candidate: &DspnModel) {}
}

impl SearchObserver for () {}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub model: DspnModel,
    pub validation_ll: f64,
    pub trace: Vec<TraceRow>,
}

/// Initial structure followed by hill climbing.
pub fn search(train_set: &SequenceDataset, validation: &SequenceDataset, cfg: &SearchConfig) -> Result<SearchOutcome> {
    search_with(train_set, validation, cfg, &mut ())
}

pub fn search_with(
    train_set: &SequenceDataset,
    validation: &SequenceDataset,
    cfg: &SearchConfig,
    observer: &mut dyn SearchObserver,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = initial_structure(train_set, validation, cfg, &mut rng)?;
    let mut state = SearchState::new(init.model, init.validation_ll, rng.random());
    let row = TraceRow {
        iteration: 0,
        accepted: true,
        template_node_count: state.current.template().graph().len(),
        k: state.current.k(),
        train_ll: init.train_ll,
        validation_ll: init.validation_ll,
        seconds: observer.elapsed_seconds(),
    };
    observer.on_candidate(&row, &state.current);
    let mut trace = vec![row];
    let oracle = IndependenceOracle::from_dataset(train_set, cfg.significance);
    let training = cfg.candidate_training();
    while state.iteration < cfg.max_iters && state.patience < cfg.patience {
        state.iteration += 1;
        let n = generate_neighbour(&mut state, &oracle, cfg)?;
        let scored = fit_and_score(&n.model, train_set, validation, &training)?;
        let accepted = scored.validation_ll > state.best_score;
        let row = TraceRow {
            iteration: state.iteration,
            accepted,
            template_node_count: scored.model.template().graph().len(),
            k: scored.model.k(),
            train_ll: scored.train_ll,
            validation_ll: scored.validation_ll,
            seconds: observer.elapsed_seconds(),
        };
        observer.on_candidate(&row, &scored.model);
        trace.push(row);
        if accepted {
            state.current = scored.model;
            state.best_score = scored.validation_ll;
            state.patience = 0;
        } else {
            state.patience += 1;
        }
    }
    Ok(SearchOutcome { model: state.current, validation_ll: state.best_score, trace })
}

/// Splits off the last `validation_fraction` of `data` for scoring, then
/// searches.
pub fn learn_structure(data: &SequenceDataset, cfg: &SearchConfig, observer: &mut dyn SearchObserver) -> Result<SearchOutcome> {
    cfg.validate()?;
    let (train_set, validation) = data.split(cfg.validation_fraction)?;
    search_with(&train_set, &validation, cfg, observer)
}
