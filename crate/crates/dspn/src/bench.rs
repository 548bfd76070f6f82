//! Cross-validated comparison of a learned dynamic network, a Baum-Welch
//! HMM and (when known) the generating model.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dspn_core::data::SequenceDataset;
use dspn_core::hmm::{baum_welch, hmm_dataset, BaumWelchConfig, DiscreteHmm};
use dspn_core::learn::params::{dataset_loglik, train, Method, TrainConfig};
use dspn_core::learn::structure::{learn_structure, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{format, seqs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub states: usize,
    pub vars: usize,
    pub arity: usize,
    pub len: usize,
    pub count: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { states: 2, vars: 1, arity: 2, len: 100, count: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset file; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    /// Generating HMM of `path`, scored as the reference model.
    pub hmm: Option<PathBuf>,
    /// Sample a random HMM and a dataset from it instead of reading `path`.
    pub generate: Option<GenerateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub threshold: usize,
    pub patience: usize,
    pub max_iters: usize,
    pub max_k: usize,
    pub em_iters: usize,
    pub validation_fraction: f64,
    pub significance: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        SearchSection {
            threshold: d.threshold,
            patience: d.patience,
            max_iters: d.max_iters,
            max_k: d.max_k,
            em_iters: d.em_iters,
            validation_fraction: d.validation_fraction,
            significance: d.significance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSection {
    pub method: String,
    pub iterations: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
}

impl Default for ParamSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        ParamSection {
            method: "em".into(),
            iterations: 200,
            alpha: d.laplace_alpha,
            learning_rate: d.learning_rate,
            tolerance: d.convergence_tol,
        }
    }
}

impl ParamSection {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let method = match self.method.as_str() {
            "em" => Method::Em,
            "gradient" => Method::Gradient,
            other => bail!("unknown training method {other:?} (expected em or gradient)"),
        };
        Ok(TrainConfig {
            method,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            laplace_alpha: self.alpha,
            convergence_tol: self.tolerance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: DataSection,
    pub folds: usize,
    pub seed: u64,
    /// Hidden states of the Baum-Welch baseline; defaults to the generator's.
    pub hmm_states: Option<usize>,
    pub baum_welch_iterations: usize,
    pub search: SearchSection,
    pub params: ParamSection,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            data: DataSection { generate: Some(GenerateSection::default()), ..Default::default() },
            folds: 10,
            seed: 0,
            hmm_states: None,
            baum_welch_iterations: 200,
            search: SearchSection::default(),
            params: ParamSection::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.path, &mut cfg.data.hmm].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn search_config(&self, seed: u64) -> Result<SearchConfig> {
        let s = &self.search;
        let cfg = SearchConfig {
            threshold: s.threshold,
            patience: s.patience,
            max_iters: s.max_iters,
            max_k: s.max_k,
            em_iters: s.em_iters,
            validation_fraction: s.validation_fraction,
            significance: s.significance,
            seed,
            train: TrainConfig { laplace_alpha: self.params.alpha, ..TrainConfig::default() },
            ..SearchConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Dataset and, when known, its generating HMM.
pub fn bench_data(cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> Result<(SequenceDataset, Option<DiscreteHmm>)> {
    match (&cfg.data.generate, &cfg.data.path) {
        (Some(g), None) => {
            let h = DiscreteHmm::random(g.states, vec![g.arity; g.vars], rng);
            let ds = hmm_dataset(&h, g.count, g.len, rng);
            Ok((ds, Some(h)))
        }
        (None, Some(path)) => {
            let ds = seqs::load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
            let h = cfg.data.hmm.as_ref().map(format::load_hmm).transpose()?;
            Ok((ds, h))
        }
        _ => bail!("the data section needs exactly one of `path` and `generate`"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub model: String,
    /// Mean negative log-likelihood per test sequence.
    pub nll: f64,
    pub learn_seconds: f64,
    pub learn_iterations: usize,
    pub inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub mean_nll: f64,
    pub std_err: f64,
    pub learn_seconds: f64,
    pub learn_seconds_per_iteration: f64,
    pub inference_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub folds: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub per_fold: Vec<FoldResult>,
}

impl BenchReport {
    pub fn row(&self, model: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Header `model,mean_nll,std_err,learn_seconds,learn_seconds_per_iteration,inference_seconds,folds,seed`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "mean_nll",
            "std_err",
            "learn_seconds",
            "learn_seconds_per_iteration",
            "inference_seconds",
            "folds",
            "seed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.mean_nll.to_string(),
                r.std_err.to_string(),
                r.learn_seconds.to_string(),
                r.learn_seconds_per_iteration.to_string(),
                r.inference_seconds.to_string(),
                self.folds.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn score<F: Fn(&SequenceDataset) -> Result<f64>>(test: &SequenceDataset, ll: F) -> Result<(f64, f64)> {
    let t = Instant::now();
    let total = ll(test)?;
    Ok((-total / test.len() as f64, t.elapsed().as_secs_f64()))
}

fn hmm_loglik(h: &DiscreteHmm, d: &SequenceDataset) -> Result<f64> {
    Ok(d.sequences.iter().map(|s| h.loglik(s)).sum())
}

fn run_fold(
    cfg: &BenchConfig,
    data: &SequenceDataset,
    truth: Option<&DiscreteHmm>,
    fold: usize,
    seed: u64,
) -> Result<Vec<FoldResult>> {
    let (train_set, test) = data.fold(cfg.folds, fold);
    let mut out = Vec::new();
    if let Some(h) = truth {
        let (nll, secs) = score(&test, |d| hmm_loglik(h, d))?;
        out.push(FoldResult { fold, model: "true".into(), nll, learn_seconds: 0.0, learn_iterations: 0, inference_seconds: secs });
    }

    let t = Instant::now();
    let search = learn_structure(&train_set, &cfg.search_config(seed)?, &mut ())?;
    let fit = train(&search.model, &train_set, &cfg.params.train_config()?)?;
    let learn_seconds = t.elapsed().as_secs_f64();
    let (nll, secs) = score(&test, |d| Ok(dataset_loglik(&fit.model, d)?))?;
    out.push(FoldResult {
        fold,
        model: "dspn".into(),
        nll,
        learn_seconds,
        learn_iterations: search.trace.len() + fit.history.len(),
        inference_seconds: secs,
    });

    let states = cfg.hmm_states.or(truth.map(DiscreteHmm::n_states)).unwrap_or(2);
    let t = Instant::now();
    let bw_cfg = BaumWelchConfig {
        iterations: cfg.baum_welch_iterations,
        alpha: cfg.params.alpha,
        seed,
        ..BaumWelchConfig::default()
    };
    let bw = baum_welch(&train_set, states, &bw_cfg)?;
    let learn_seconds = t.elapsed().as_secs_f64();
    let (nll, secs) = score(&test, |d| hmm_loglik(&bw.hmm, d))?;
    out.push(FoldResult {
        fold,
        model: "hmm".into(),
        nll,
        learn_seconds,
        learn_iterations: bw.history.len(),
        inference_seconds: secs,
    });
    Ok(out)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.folds < 2 {
        bail!("need at least 2 folds");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (data, truth) = bench_data(cfg, &mut rng)?;
    if data.len() < cfg.folds {
        bail!("{} sequences cannot be split into {} folds", data.len(), cfg.folds);
    }
    let seeds: Vec<u64> = (0..cfg.folds).map(|_| rng.random()).collect();
    let per_fold: Vec<FoldResult> = seeds
        .par_iter()
        .enumerate()
        .map(|(fold, &seed)| run_fold(cfg, &data, truth.as_ref(), fold, seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut rows = Vec::new();
    for model in ["true", "dspn", "hmm"] {
        let fr: Vec<&FoldResult> = per_fold.iter().filter(|r| r.model == model).collect();
        if fr.is_empty() {
            continue;
        }
        let n = fr.len() as f64;
        let mean = fr.iter().map(|r| r.nll).sum::<f64>() / n;
        let var = fr.iter().map(|r| (r.nll - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let learn: f64 = fr.iter().map(|r| r.learn_seconds).sum::<f64>() / n;
        let iters: usize = fr.iter().map(|r| r.learn_iterations).sum();
        rows.push(BenchRow {
            model: model.into(),
            mean_nll: mean,
            std_err: (var / n).sqrt(),
            learn_seconds: learn,
            learn_seconds_per_iteration: if iters == 0 { 0.0 } else { learn * n / iters as f64 },
            inference_seconds: fr.iter().map(|r| r.inference_seconds).sum::<f64>() / n,
        });
    }
    Ok(BenchReport { folds: cfg.folds, seed: cfg.seed, rows, per_fold })
}
