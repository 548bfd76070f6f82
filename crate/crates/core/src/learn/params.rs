//! Weight estimation for a fixed dynamic network: EM and gradient ascent with
//! template parameters tied across slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::SequenceDataset;
use crate::dspn::{DspnModel, Part};
use crate::logspace::{self, LOG_ONE, LOG_ZERO};
use crate::spn::{backward_into, for_each_edge, forward_into, Evidence, Node, NodeId, SpnGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Em,
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub iterations: usize,
    /// Step size of gradient ascent, applied to the per-sequence mean
    /// gradient.
    pub learning_rate: f64,
    /// Pseudo-count added to every edge count in the M-step.
    pub laplace_alpha: f64,
    /// Stop once the relative change in train log-likelihood drops below.
    pub convergence_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Em,
            iterations: 100,
            learning_rate: 0.5,
            laplace_alpha: 0.1,
            convergence_tol: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.laplace_alpha >= 0.0 && self.laplace_alpha.is_finite()) {
            return Err(Error::Config("laplace_alpha must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::Config("convergence_tol must be non-negative"));
        }
        Ok(())
    }
}

/// Per-edge accumulators of one network part, indexed like
/// [`SpnGraph::weights`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeStatistics {
    /// Expected number of times each edge was used.
    pub counts: Vec<f64>,
    /// Derivative of the log-likelihood with respect to each weight.
    pub gradient: Vec<f64>,
}

impl EdgeStatistics {
    fn zeros(n: usize) -> Self {
        EdgeStatistics { counts: vec![0.0; n], gradient: vec![0.0; n] }
    }

    fn merge(&mut self, other: &EdgeStatistics) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.gradient.iter_mut().zip(&other.gradient).for_each(|(a, b)| *a += b);
    }
}

/// Edge statistics summed over every sequence; template statistics are also
/// summed over every slice that uses the template.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TiedStatistics {
    pub bottom: EdgeStatistics,
    pub template: EdgeStatistics,
    pub top: EdgeStatistics,
    pub loglik: f64,
    pub n_sequences: usize,
}

impl TiedStatistics {
    pub fn zeros(m: &DspnModel) -> Self {
        TiedStatistics {
            bottom: EdgeStatistics::zeros(m.bottom().graph().n_edges()),
            template: EdgeStatistics::zeros(m.template().graph().n_edges()),
            top: EdgeStatistics::zeros(m.top().graph().n_edges()),
            loglik: 0.0,
            n_sequences: 0,
        }
    }

    pub fn part(&self, part: Part) -> &EdgeStatistics {
        match part {
            Part::Bottom => &self.bottom,
            Part::Template => &self.template,
            Part::Top => &self.top,
        }
    }

    /// Adds another accumulator, e.g. one filled by a different worker.
    pub fn merge(&mut self, other: &TiedStatistics) {
        self.bottom.merge(&other.bottom);
        self.template.merge(&other.template);
        self.top.merge(&other.top);
        self.loglik += other.loglik;
        self.n_sequences += other.n_sequences;
    }
}

/// Scratch buffers for the rolling forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct EStep {
    bottom_values: Vec<f64>,
    slice_values: Vec<Vec<f64>>,
    top_values: Vec<f64>,
    iface: Vec<f64>,
    slot_grads: Vec<f64>,
    root_grads: Vec<f64>,
    grads: Vec<f64>,
    scratch: Vec<f64>,
}

fn accumulate(g: &SpnGraph, values: &[f64], grads: &[f64], total: f64, out: &mut EdgeStatistics) {
    for_each_edge(g, values, grads, |e, _, _, lw, d, v| {
        let lg = d + v - total;
        if lg != LOG_ZERO && !lg.is_nan() {
            out.gradient[e] += logspace::exp(lg);
            out.counts[e] += logspace::exp(lw + lg);
        }
    });
}

/// Log derivative reaching each interface input slot.
fn input_grads(inputs: &[Option<NodeId>], grads: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(inputs.iter().map(|n| n.map_or(LOG_ZERO, |id| grads[id.0])));
}

impl EStep {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one sequence's contribution to `stats`. `index` only labels the
    /// error raised for a zero-probability sequence.
    pub fn accumulate(
        &mut self,
        m: &DspnModel,
        seq: &[Evidence],
        index: usize,
        stats: &mut TiedStatistics,
    ) -> Result<()> {
        let (first, rest) = seq.split_first().ok_or(Error::EmptySequence)?;
        for slice in seq {
            slice.validate(m.arities())?;
        }
        let bottom = m.bottom().graph();
        let t = m.template();
        let tg = t.graph();
        let top = m.top().graph();

        forward_into(bottom, first, &[], &mut self.bottom_values)?;
        self.iface.clear();
        self.iface.extend(bottom.roots().iter().map(|r| self.bottom_values[r.0]));
        if self.slice_values.len() < rest.len() {
            self.slice_values.resize_with(rest.len(), Vec::new);
        }
        for (slice, values) in rest.iter().zip(self.slice_values.iter_mut()) {
            forward_into(tg, slice, &self.iface, values)?;
            self.iface.clear();
            self.iface.extend((0..t.k()).map(|s| values[t.output_for_slot(s).0]));
        }
        forward_into(top, &Evidence::marginal(top.n_vars()), &self.iface, &mut self.top_values)?;
        let total = self.top_values[top.roots()[0].0];
        if total == LOG_ZERO || total.is_nan() {
            return Err(Error::NumericalUnderflow(index));
        }

        backward_into(top, &self.top_values, &[LOG_ONE], &mut self.grads, &mut self.scratch);
        accumulate(top, &self.top_values, &self.grads, total, &mut stats.top);
        input_grads(&top.interface_inputs(), &self.grads, &mut self.slot_grads);

        let t_inputs = tg.interface_inputs();
        for values in self.slice_values[..rest.len()].iter().rev() {
            self.root_grads.clear();
            self.root_grads.resize(t.k(), LOG_ZERO);
            for (slot, &d) in self.slot_grads.iter().enumerate() {
                self.root_grads[t.f_map()[slot]] = d;
            }
            backward_into(tg, values, &self.root_grads, &mut self.grads, &mut self.scratch);
            accumulate(tg, values, &self.grads, total, &mut stats.template);
            input_grads(&t_inputs, &self.grads, &mut self.slot_grads);
        }

        backward_into(bottom, &self.bottom_values, &self.slot_grads, &mut self.grads, &mut self.scratch);
        accumulate(bottom, &self.bottom_values, &self.grads, total, &mut stats.bottom);
        stats.loglik += total;
        stats.n_sequences += 1;
        Ok(())
    }
}

/// E-step over a whole dataset.
pub fn collect_statistics(m: &DspnModel, data: &SequenceDataset) -> Result<TiedStatistics> {
    let mut stats = TiedStatistics::zeros(m);
    let mut e = EStep::new();
    for (i, seq) in data.sequences.iter().enumerate() {
        e.accumulate(m, seq, i, &mut stats)?;
    }
    Ok(stats)
}

/// Derivative of the total log-likelihood with respect to every tied weight.
pub fn tied_weight_gradient(m: &DspnModel, data: &SequenceDataset) -> Result<TiedStatistics> {
    collect_statistics(m, data)
}

/// Total log-likelihood of a dataset.
pub fn dataset_loglik(m: &DspnModel, data: &SequenceDataset) -> Result<f64> {
    let mut r = crate::dspn::RollingEvaluator::new();
    data.sequences.iter().try_fold(0.0, |acc, s| Ok(acc + r.loglik(m, s)?))
}

/// `alpha * Σ ln w` over all sum weights: the log density, up to a constant,
/// of the Dirichlet prior whose MAP estimate the smoothed M-step computes.
pub fn log_prior(m: &DspnModel, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    [Part::Bottom, Part::Template, Part::Top]
        .iter()
        .flat_map(|&p| m.graph(p).weights())
        .map(|w| alpha * logspace::ln(w))
        .sum()
}

fn sum_node_ranges(g: &SpnGraph) -> Vec<(usize, usize)> {
    g.nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match n {
            Node::Sum { children, .. } => Some((g.edge_offset(NodeId(i)), children.len())),
            _ => None,
        })
        .collect()
}

fn m_step(g: &mut SpnGraph, counts: &[f64], alpha: f64) -> Result<()> {
    let mut w = g.weights();
    for (off, len) in sum_node_ranges(g) {
        let c = &counts[off..off + len];
        let total: f64 = c.iter().map(|x| x + alpha).sum();
        if total > 0.0 && total.is_finite() {
            for j in 0..len {
                w[off + j] = (c[j] + alpha) / total;
            }
        }
    }
    g.set_weights(&w)
}

fn softmax_step(g: &mut SpnGraph, stats: &EdgeStatistics, lr: f64) -> Result<()> {
    let mut w = g.weights();
    let mut theta = Vec::new();
    for (off, len) in sum_node_ranges(g) {
        if len < 2 {
            continue;
        }
        let n = &stats.counts[off..off + len];
        let wn = &w[off..off + len];
        let mass: f64 = n.iter().sum();
        theta.clear();
        theta.extend((0..len).map(|j| logspace::ln(wn[j]) + lr * (n[j] - wn[j] * mass)));
        let lse = logspace::log_sum_exp(&theta);
        for j in 0..len {
            w[off + j] = logspace::exp(theta[j] - lse);
        }
    }
    g.set_weights(&w)
}

/// One EM iteration. Returns the updated model and the train log-likelihood
/// of `m` (before the update).
pub fn em_step(m: &DspnModel, data: &SequenceDataset, cfg: &TrainConfig) -> Result<(DspnModel, f64)> {
    cfg.validate()?;
    let stats = collect_statistics(m, data)?;
    let mut next = m.clone();
    for part in [Part::Bottom, Part::Template, Part::Top] {
        m_step(next.graph_mut(part), &stats.part(part).counts, cfg.laplace_alpha)?;
    }
    Ok((next, stats.loglik))
}

/// One ascent step on the mean per-sequence log-likelihood, in softmax
/// coordinates `w_ij = exp(θ_ij) / Σ_k exp(θ_ik)`. Returns the updated model
/// and the train log-likelihood of `m`.
pub fn gradient_step(m: &DspnModel, data: &SequenceDataset, cfg: &TrainConfig) -> Result<(DspnModel, f64)> {
    cfg.validate()?;
    let stats = collect_statistics(m, data)?;
    let lr = cfg.learning_rate / stats.n_sequences.max(1) as f64;
    let mut next = m.clone();
    for part in [Part::Bottom, Part::Template, Part::Top] {
        softmax_step(next.graph_mut(part), stats.part(part), lr)?;
    }
    Ok((next, stats.loglik))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DspnModel,
    /// Train log-likelihood before each update.
    pub history: Vec<f64>,
    /// Train log-likelihood of `model`.
    pub loglik: f64,
    pub converged: bool,
}

/// Repeats [`em_step`] or [`gradient_step`] until the relative change in
/// train log-likelihood falls below `convergence_tol` or the iteration cap is
/// hit. Returns the best model seen, so the result never scores below `m`.
pub fn train(m: &DspnModel, data: &SequenceDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let step = match cfg.method {
        Method::Em => em_step,
        Method::Gradient => gradient_step,
    };
    let mut current = m.clone();
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(DspnModel, f64)> = None;
    let mut converged = false;
    for _ in 0..cfg.iterations {
        let (next, ll) = step(&current, data, cfg)?;
        if best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((current, ll));
        }
        if let Some(&prev) = history.last() {
            if relative_change(prev, ll) < cfg.convergence_tol {
                converged = true;
            }
        }
        history.push(ll);
        current = next;
        if converged {
            break;
        }
    }
    let ll = dataset_loglik(&current, data)?;
    let (model, loglik) = match best {
        Some((b, bll)) if bll > ll => (b, bll),
        _ => (current, ll),
    };
    Ok(TrainOutcome { model, history, loglik, converged })
}

fn relative_change(prev: f64, next: f64) -> f64 {
    ((next - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs()
}
