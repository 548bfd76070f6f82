//! Discrete hidden Markov models: generator, forward likelihood and
//! Baum-Welch. Serves as data source and as an exactness oracle for the
//! dynamic networks.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SequenceDataset;
use crate::dspn::{derive_bottom, DspnModel, TemplateNetwork, TopNetwork};
use crate::logspace;
use crate::spn::{Evidence, SpnBuilder};
use crate::{Error, Result};

/// Row sums of every distribution must equal one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// HMM whose hidden state emits one categorical value per observed variable,
/// independently given the state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    pub initial: Vec<f64>,
    /// `transition[i][j] = P(z_{t+1} = j | z_t = i)`.
    pub transition: Vec<Vec<f64>>,
    /// `emissions[state][var][value]`.
    pub emissions: Vec<Vec<Vec<f64>>>,
    pub arities: Vec<usize>,
}

fn check_distribution(p: &[f64], what: &'static str) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config(what));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Config(what));
    }
    Ok(())
}

/// Dirichlet(1, ..., 1) draw via normalized unit exponentials.
fn flat_dirichlet<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| -logspace::ln(1.0 - rng.random::<f64>())).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn draw<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl DiscreteHmm {
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emissions: Vec<Vec<Vec<f64>>>,
        arities: Vec<usize>,
    ) -> Result<Self> {
        let s = initial.len();
        check_distribution(&initial, "initial distribution")?;
        if transition.len() != s || emissions.len() != s {
            return Err(Error::Config("state count differs between tables"));
        }
        for row in &transition {
            if row.len() != s {
                return Err(Error::Config("transition matrix is not square"));
            }
            check_distribution(row, "transition row")?;
        }
        for per_state in &emissions {
            if per_state.len() != arities.len() {
                return Err(Error::Config("emission table width differs from variable count"));
            }
            for (dist, &a) in per_state.iter().zip(&arities) {
                if dist.len() != a {
                    return Err(Error::Config("emission distribution length differs from arity"));
                }
                check_distribution(dist, "emission distribution")?;
            }
        }
        Ok(DiscreteHmm { initial, transition, emissions, arities })
    }

    /// Random parameters, every row drawn from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(n_states: usize, arities: Vec<usize>, rng: &mut R) -> Self {
        let initial = flat_dirichlet(n_states, rng);
        let transition = (0..n_states).map(|_| flat_dirichlet(n_states, rng)).collect();
        let emissions = (0..n_states)
            .map(|_| arities.iter().map(|&a| flat_dirichlet(a, rng)).collect())
            .collect();
        DiscreteHmm { initial, transition, emissions, arities }
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_vars(&self) -> usize {
        self.arities.len()
    }

    fn emission_prob(&self, state: usize, slice: &Evidence) -> f64 {
        slice
            .observed_vars()
            .map(|(v, x)| self.emissions[state][v][x as usize])
            .product()
    }

    /// Ancestral sample of length `t`.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Vec<Vec<u32>> {
        self.sample_path(t, rng).1
    }

    /// Hidden state path and observations of length `t`.
    pub fn sample_path<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<u32>>) {
        let mut states = Vec::with_capacity(t);
        let mut out = Vec::with_capacity(t);
        let mut z = draw(&self.initial, rng);
        for step in 0..t {
            if step > 0 {
                z = draw(&self.transition[z], rng);
            }
            states.push(z);
            out.push(self.emissions[z].iter().map(|d| draw(d, rng) as u32).collect());
        }
        (states, out)
    }

    /// Scaled forward recursion; missing values are marginalized.
    pub fn loglik(&self, seq: &[Evidence]) -> f64 {
        if seq.is_empty() {
            return 0.0;
        }
        let s = self.n_states();
        let mut alpha: Vec<f64> = (0..s).map(|i| self.initial[i] * self.emission_prob(i, &seq[0])).collect();
        let mut ll = 0.0;
        let mut next = vec![0.0; s];
        for (t, slice) in seq.iter().enumerate() {
            if t > 0 {
                for j in 0..s {
                    let pred: f64 = (0..s).map(|i| alpha[i] * self.transition[i][j]).sum();
                    next[j] = pred * self.emission_prob(j, slice);
                }
                core::mem::swap(&mut alpha, &mut next);
            }
            let c: f64 = alpha.iter().sum();
            if c == 0.0 {
                return logspace::LOG_ZERO;
            }
            ll += logspace::ln(c);
            alpha.iter_mut().for_each(|a| *a /= c);
        }
        ll
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let s = self.n_states();
        let mut p = vec![1.0 / s as f64; s];
        for _ in 0..100_000 {
            let q: Vec<f64> = (0..s).map(|j| (0..s).map(|i| p[i] * self.transition[i][j]).sum()).collect();
            let diff: f64 = q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            p = q;
            if diff < 1e-15 {
                break;
            }
        }
        p
    }

    /// Exact encoding as a dynamic network with one interface slot per
    /// state.
    ///
    /// The returned model reads sequences last slice first: template root
    /// `i` is the emission of state `i` times a transition mixture over the
    /// slots of the (later) slice underneath, and the top network holds the
    /// initial distribution. Use [`reversed`] to score a sequence in its
    /// natural order.
    pub fn to_dspn(&self) -> Result<DspnModel> {
        let s = self.n_states();
        let n = self.n_vars();
        let mut b = SpnBuilder::new(self.arities.clone(), s);
        let inputs: Vec<_> = (0..s).map(|j| b.input(j)).collect();
        let mut roots = Vec::with_capacity(s);
        for i in 0..s {
            let mut factors: Vec<_> = (0..n).map(|v| b.univariate(v, self.emissions[i][v].clone())).collect();
            factors.push(b.sum(inputs.clone(), self.transition[i].clone()));
            roots.push(b.product(factors));
        }
        let template = TemplateNetwork::with_identity_map(b.build(roots)?)?;
        let bottom = derive_bottom(&template)?;
        let top = TopNetwork::mixture(self.arities.clone(), self.initial.clone())?;
        DspnModel::new(bottom, template, top)
    }
}

/// Sequence with its slices in reverse order.
pub fn reversed(seq: &[Evidence]) -> Vec<Evidence> {
    seq.iter().rev().cloned().collect()
}

/// Reproducible sample of length `t`.
pub fn hmm_sample(h: &DiscreteHmm, t: usize, seed: u64) -> Vec<Vec<u32>> {
    h.sample(t, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `count` sequences of length `len` as a dataset.
pub fn hmm_dataset<R: Rng + ?Sized>(h: &DiscreteHmm, count: usize, len: usize, rng: &mut R) -> SequenceDataset {
    let sequences = (0..count)
        .map(|_| h.sample(len, rng).iter().map(|s| Evidence::observed(s)).collect())
        .collect();
    SequenceDataset { name: "hmm-samples".into(), arities: h.arities.clone(), sequences }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchConfig {
    pub iterations: usize,
    /// Additive pseudo-count for every probability table.
    pub alpha: f64,
    /// Stop when the relative change of the log-likelihood falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for BaumWelchConfig {
    fn default() -> Self {
        BaumWelchConfig { iterations: 200, alpha: 0.1, tolerance: 1e-7, seed: 0 }
    }
}

/// Baum-Welch output: the model and the training log-likelihood before each
/// update.
#[derive(Debug, Clone)]
pub struct BaumWelchFit {
    pub hmm: DiscreteHmm,
    pub history: Vec<f64>,
}

/// EM for HMMs from a seeded random start, with additive smoothing.
pub fn baum_welch(data: &SequenceDataset, n_states: usize, cfg: &BaumWelchConfig) -> Result<BaumWelchFit> {
    if data.is_empty() {
        return Err(Error::DegenerateData("empty training set"));
    }
    if n_states == 0 {
        return Err(Error::Config("need at least one state"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut h = DiscreteHmm::random(n_states, data.arities.clone(), &mut rng);
    let mut history = Vec::new();
    for _ in 0..cfg.iterations {
        let (next, ll) = baum_welch_step(&h, data, cfg.alpha);
        let stop = history
            .last()
            .is_some_and(|&prev: &f64| ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tolerance);
        history.push(ll);
        h = next;
        if stop {
            break;
        }
    }
    Ok(BaumWelchFit { hmm: h, history })
}

/// One EM update; returns the new model and the log-likelihood of `h`.
pub fn baum_welch_step(h: &DiscreteHmm, data: &SequenceDataset, alpha: f64) -> (DiscreteHmm, f64) {
    let s = h.n_states();
    let mut init_c = vec![0.0; s];
    let mut trans_c = vec![vec![0.0; s]; s];
    let mut emit_c: Vec<Vec<Vec<f64>>> =
        (0..s).map(|_| h.arities.iter().map(|&a| vec![0.0; a]).collect()).collect();
    let mut total_ll = 0.0;
    for seq in &data.sequences {
        let t_len = seq.len();
        let emit: Vec<Vec<f64>> = seq.iter().map(|sl| (0..s).map(|i| h.emission_prob(i, sl)).collect()).collect();
        let mut alpha_hat = vec![vec![0.0; s]; t_len];
        let mut scale = vec![0.0; t_len];
        for t in 0..t_len {
            for j in 0..s {
                let pred = if t == 0 {
                    h.initial[j]
                } else {
                    (0..s).map(|i| alpha_hat[t - 1][i] * h.transition[i][j]).sum()
                };
                alpha_hat[t][j] = pred * emit[t][j];
            }
            let c: f64 = alpha_hat[t].iter().sum();
            scale[t] = c;
            if c > 0.0 {
                alpha_hat[t].iter_mut().for_each(|a| *a /= c);
            }
        }
        total_ll += scale.iter().map(|&c| logspace::ln(c)).sum::<f64>();
        let mut beta_hat = vec![vec![1.0; s]; t_len];
        for t in (0..t_len.saturating_sub(1)).rev() {
            for i in 0..s {
                beta_hat[t][i] = (0..s)
                    .map(|j| h.transition[i][j] * emit[t + 1][j] * beta_hat[t + 1][j])
                    .sum::<f64>()
                    / scale[t + 1];
            }
        }
        for t in 0..t_len {
            for i in 0..s {
                let gamma = alpha_hat[t][i] * beta_hat[t][i];
                if t == 0 {
                    init_c[i] += gamma;
                }
                for (v, x) in seq[t].observed_vars() {
                    emit_c[i][v][x as usize] += gamma;
                }
                if t + 1 < t_len {
                    for j in 0..s {
                        trans_c[i][j] += alpha_hat[t][i] * h.transition[i][j] * emit[t + 1][j]
                            * beta_hat[t + 1][j]
                            / scale[t + 1];
                    }
                }
            }
        }
    }
    let normalize = |counts: &[f64], old: &[f64]| -> Vec<f64> {
        let total: f64 = counts.iter().map(|c| c + alpha).sum();
        if total > 0.0 {
            counts.iter().map(|c| (c + alpha) / total).collect()
        } else {
            old.to_vec()
        }
    };
    let next = DiscreteHmm {
        initial: normalize(&init_c, &h.initial),
        transition: trans_c.iter().zip(&h.transition).map(|(c, o)| normalize(c, o)).collect(),
        emissions: emit_c
            .iter()
            .zip(&h.emissions)
            .map(|(per_state, old)| per_state.iter().zip(old).map(|(c, o)| normalize(c, o)).collect())
            .collect(),
        arities: h.arities.clone(),
    };
    (next, total_ll)
}

impl DiscreteHmm {
    /// `alpha * Σ ln p` over every table entry: the log density (up to a
    /// constant) of the Dirichlet prior that additive smoothing maximizes.
    pub fn log_prior(&self, alpha: f64) -> f64 {
        let mut lp = 0.0;
        let mut add = |p: &[f64]| lp += p.iter().map(|&x| alpha * logspace::ln(x)).sum::<f64>();
        add(&self.initial);
        self.transition.iter().for_each(|r| add(r));
        self.emissions.iter().flatten().for_each(|d| add(d));
        lp
    }
}
