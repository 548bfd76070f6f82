//! Subcommands of the `dspn` binary. Each returns the process exit code and
//! writes its report to `out`.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dspn_core::data::SequenceDataset;
use dspn_core::dspn::{check_invariance, sequence_loglik, unroll, verify_stacking, ScopeAssignment};
use dspn_core::hmm::{hmm_dataset, DiscreteHmm};
use dspn_core::learn::params::{train, Method, TrainConfig};
use dspn_core::learn::structure::{learn_structure, SearchConfig, SearchObserver, TraceRow};
use dspn_core::dspn::DspnModel;
use dspn_core::spn::{check_validity, evaluate, Evidence, Scope};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{run_bench, BenchConfig};
use crate::format::{load_dspn, load_model, save_model, Model};
use crate::seqs::{load_dataset, save_dataset};

#[derive(Debug, Parser)]
#[command(name = "dspn", version, about = "Dynamic sum-product networks over discrete sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Em,
    Gradient,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file; exits 0 iff it is valid.
    Validate { model: PathBuf },
    /// Expand a dynamic model into a static network over T slices.
    Unroll {
        model: PathBuf,
        #[arg(short = 'T', long = "slices")]
        slices: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-sequence log-likelihood, or Pr(query | given) when --query is set;
    /// observed values of query variables are ignored.
    /// Assignments are `index=value` lists with index = slice * n + var.
    Infer {
        model: PathBuf,
        data: PathBuf,
        #[arg(long)]
        query: Option<String>,
        #[arg(long)]
        given: Option<String>,
    },
    /// Fit the weights of a dynamic model with the structure held fixed.
    LearnParams {
        model: PathBuf,
        data: PathBuf,
        #[arg(long, value_enum, default_value = "em")]
        method: MethodArg,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Search for a template structure; prints (or writes) a trace CSV.
    LearnStruct {
        data: PathBuf,
        #[arg(long, default_value_t = 6)]
        threshold: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 16)]
        max_k: usize,
        #[arg(long, default_value_t = 20)]
        em_iters: usize,
        #[arg(long, default_value_t = 0.15)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sample a random HMM and a dataset from it.
    GenHmm {
        #[arg(long, default_value_t = 2)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        vars: usize,
        #[arg(long, default_value_t = 2)]
        arity: usize,
        #[arg(long, default_value_t = 100)]
        len: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        hmm_out: Option<PathBuf>,
    },
    /// Cross-validated comparison described by a TOML config.
    Bench {
        config: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Validate { model } => validate(&load_model(&model).with_context(|| format!("reading {}", model.display()))?, out),
        Command::Unroll { model, slices, output } => {
            let g = unroll(&load_dspn(&model).with_context(|| format!("reading {}", model.display()))?, slices)?;
            save_model(&Model::Spn(g), &output)?;
            Ok(0)
        }
        Command::Infer { model, data, query, given } => {
            let m = load_model(&model).with_context(|| format!("reading {}", model.display()))?;
            let ds = load_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let query = query.as_deref().map(parse_assignment).transpose()?;
            let given = given.as_deref().map(parse_assignment).transpose()?.unwrap_or_default();
            infer(&m, &ds, query.as_deref(), &given, out)?;
            Ok(0)
        }
        Command::LearnParams { model, data, method, iters, alpha, lr, tol, output } => {
            let m = load_dspn(&model).with_context(|| format!("reading {}", model.display()))?;
            let ds = load_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let cfg = TrainConfig {
                method: match method {
                    MethodArg::Em => Method::Em,
                    MethodArg::Gradient => Method::Gradient,
                },
                iterations: iters,
                learning_rate: lr,
                laplace_alpha: alpha,
                convergence_tol: tol,
            };
            let fit = train(&m, &ds, &cfg)?;
            save_model(&Model::Dspn(fit.model), &output)?;
            writeln!(out, "iteration,train_ll")?;
            for (i, ll) in fit.history.iter().enumerate() {
                writeln!(out, "{i},{ll}")?;
            }
            Ok(0)
        }
        Command::LearnStruct {
            data,
            threshold,
            patience,
            max_iters,
            max_k,
            em_iters,
            validation_fraction,
            seed,
            output,
            trace,
        } => {
            let ds = load_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let cfg = SearchConfig {
                threshold,
                patience,
                max_iters,
                max_k,
                em_iters,
                validation_fraction,
                seed,
                ..SearchConfig::default()
            };
            let mut clock = Clock(std::time::Instant::now());
            let res = learn_structure(&ds, &cfg, &mut clock)?;
            save_model(&Model::Dspn(res.model), &output)?;
            match trace {
                Some(path) => {
                    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_trace(&res.trace, f)?
                }
                None => write_trace(&res.trace, &mut *out)?,
            }
            Ok(0)
        }
        Command::GenHmm { states, vars, arity, len, count, seed, output, hmm_out } => {
            if states == 0 || vars == 0 || arity < 2 || len == 0 || count == 0 {
                bail!("states, vars, len and count must be positive and arity at least 2");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = DiscreteHmm::random(states, vec![arity; vars], &mut rng);
            let mut ds = hmm_dataset(&h, count, len, &mut rng);
            ds.name = format!("hmm-{states}x{vars}-seed{seed}");
            save_dataset(&ds, &output)?;
            if let Some(p) = hmm_out {
                save_model(&Model::Hmm(h), &p)?;
            }
            Ok(0)
        }
        Command::Bench { config, folds, seed } => {
            let mut cfg = BenchConfig::load(&config)?;
            if let Some(f) = folds {
                cfg.folds = f;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            run_bench(&cfg)?.write_csv(out)?;
            Ok(0)
        }
    }
}

struct Clock(std::time::Instant);

impl SearchObserver for Clock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
    fn on_candidate(&mut self, _row: &TraceRow, _model: &DspnModel) {}
}

pub fn write_trace(rows: &[TraceRow], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["iteration", "accepted", "template_nodes", "k", "train_ll", "validation_ll", "seconds"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.accepted.to_string(),
            r.template_node_count.to_string(),
            r.k.to_string(),
            r.train_ll.to_string(),
            r.validation_ll.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `3=1,5=0` into (flat index, value) pairs.
pub fn parse_assignment(s: &str) -> Result<Vec<(usize, u32)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (i, v) = p.split_once('=').with_context(|| format!("expected index=value, got {p:?}"))?;
            Ok((i.trim().parse().with_context(|| format!("bad index in {p:?}"))?, v.trim().parse().with_context(|| format!("bad value in {p:?}"))?))
        })
        .collect()
}

fn validate(m: &Model, out: &mut dyn Write) -> Result<i32> {
    let ok = match m {
        Model::Spn(g) => {
            let scopes = vec![Scope::atom(0); g.n_interface_inputs()];
            let r = check_validity(g, &scopes)?;
            for v in &r.violations {
                writeln!(out, "violation: {v:?}")?;
            }
            r.is_valid()
        }
        Model::Dspn(d) => {
            let r = verify_stacking(d)?;
            for v in &r.bottom.violations {
                writeln!(out, "bottom: {v:?}")?;
            }
            for (i, j) in &r.overlapping_bottom_roots {
                writeln!(out, "bottom roots {i} and {j} overlap without being equal")?;
            }
            for v in &r.template.violations {
                writeln!(out, "template: {v:?}")?;
            }
            for v in &r.top.violations {
                writeln!(out, "top: {v:?}")?;
            }
            // Invariance is a property of the template alone as well.
            let solo = check_invariance(d.template(), &ScopeAssignment::single(d.k()))?;
            for v in &solo.violations {
                writeln!(out, "template (shared input scope): {v:?}")?;
            }
            r.is_valid() && solo.is_invariant()
        }
        Model::Hmm(_) => true,
    };
    writeln!(out, "{}", if ok { "valid" } else { "invalid" })?;
    Ok(if ok { 0 } else { 1 })
}

fn apply(seq: &[Evidence], n: usize, assignment: &[(usize, u32)]) -> Result<Vec<Evidence>> {
    let mut seq = seq.to_vec();
    for &(i, v) in assignment {
        let (t, var) = (i / n, i % n);
        let slice = seq.get_mut(t).with_context(|| format!("index {i} is beyond slice {} of the sequence", t))?;
        slice.set(var, Some(v));
    }
    Ok(seq)
}

fn loglik(m: &Model, seq: &[Evidence]) -> Result<f64> {
    Ok(match m {
        Model::Dspn(d) => sequence_loglik(d, seq)?,
        Model::Hmm(h) => h.loglik(seq),
        Model::Spn(g) => {
            let e = Evidence::concat(seq);
            e.validate(g.arities())?;
            evaluate(g, &e, &[])?[0]
        }
    })
}

fn infer(
    m: &Model,
    ds: &SequenceDataset,
    query: Option<&[(usize, u32)]>,
    given: &[(usize, u32)],
    out: &mut dyn Write,
) -> Result<()> {
    let n = ds.n_vars();
    match query {
        None => writeln!(out, "sequence,loglik")?,
        Some(_) => writeln!(out, "sequence,probability")?,
    }
    for (i, seq) in ds.sequences.iter().enumerate() {
        let Some(q) = query else {
            let ll = loglik(m, &apply(seq, n, given)?).with_context(|| format!("sequence {i}"))?;
            writeln!(out, "{i},{ll}")?;
            continue;
        };
        // Query variables are unobserved in the denominator.
        let mut base = seq.clone();
        for &(idx, _) in q {
            if let Some(s) = base.get_mut(idx / n) {
                s.set(idx % n, None);
            }
        }
        let base = apply(&base, n, given)?;
        for &(idx, v) in q {
            if given.iter().any(|&(j, w)| j == idx && w != v) {
                bail!("query {idx}={v} contradicts --given");
            }
        }
        let den = loglik(m, &base).with_context(|| format!("sequence {i}"))?;
        if den == f64::NEG_INFINITY {
            bail!("sequence {i}: the evidence has probability zero");
        }
        let num = loglik(m, &apply(&base, n, q)?)?;
        writeln!(out, "{i},{}", (num - den).exp())?;
    }
    Ok(())
}
