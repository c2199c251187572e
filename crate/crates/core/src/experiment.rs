//! Multi-trial learning experiments and their tabular outputs.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{BenchmarkDistribution, DistributionSpec};
use crate::dimension_tree::{DimensionTree, RankVector};
use crate::error::{Error, Result};
use crate::learner::{self, LearnerConfig};
use crate::rank_adapter::{adapt_ranks, AdaptationState, RankAdapterConfig};
use crate::tree_adapter::TreeProposalConfig;
use crate::tree_tensor::TreeTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialTree {
    /// Linear tree with the dimensions randomly assigned to the leaves.
    RandomLinear,
    Linear,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distribution: DistributionSpec,
    pub n_train: Vec<usize>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_n_error")]
    pub n_error: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Polynomial degree for continuous distributions.
    #[serde(default = "default_degree")]
    pub max_degree: usize,
    #[serde(default = "default_initial_tree")]
    pub initial_tree: InitialTree,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub rank: RankAdapterConfig,
    #[serde(default = "default_tree_cfg")]
    pub tree: TreeProposalConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_test() -> usize {
    100_000
}
fn default_n_error() -> usize {
    100_000
}
fn default_trials() -> usize {
    10
}
fn default_degree() -> usize {
    50
}
fn default_initial_tree() -> InitialTree {
    InitialTree::RandomLinear
}
/// Tree search settings used while learning: a looser tolerance than for
/// exact compression, and a short chain per rank step.
pub fn default_tree_cfg() -> TreeProposalConfig {
    TreeProposalConfig { epsilon: 1e-2, max_iterations: 50, ..Default::default() }
}

impl ExperimentConfig {
    pub fn for_distribution(distribution: DistributionSpec, n_train: Vec<usize>) -> Self {
        Self {
            distribution,
            n_train,
            n_test: default_n_test(),
            n_error: default_n_error(),
            trials: default_trials(),
            max_degree: default_degree(),
            initial_tree: default_initial_tree(),
            learner: LearnerConfig::default(),
            rank: RankAdapterConfig::default(),
            tree: default_tree_cfg(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials: must be >= 1".into()));
        }
        if self.n_train.is_empty() || self.n_train.iter().any(|&n| n < 2) {
            return Err(Error::Config("n_train: need at least one size, each >= 2".into()));
        }
        if self.n_test == 0 {
            return Err(Error::Config("n_test: must be >= 1".into()));
        }
        if self.n_error == 0 {
            return Err(Error::Config("n_error: must be >= 1".into()));
        }
        self.learner.validate()?;
        self.rank.validate()?;
        self.tree.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub test_risk: f64,
    pub rel_error: f64,
    pub complexity: usize,
    pub tree_json: String,
    pub ranks: RankVector,
    pub elapsed_s: f64,
    /// Largest rise of the empirical risk between consecutive core updates.
    pub max_risk_increase: f64,
    #[serde(skip)]
    pub model: Option<TreeTensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn of(v: &[f64]) -> Self {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Range { mean, min, max }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub test_risk: Range,
    pub rel_error: Range,
    pub complexity: Range,
    /// Trial with the smallest relative error.
    pub best_trial: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
}

/// Generator for trial `k`: the master seed with its own stream.
pub fn trial_rng(master: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k);
    rng
}

pub fn initial_tree<R: Rng + ?Sized>(kind: InitialTree, d: usize, rng: &mut R) -> Result<DimensionTree> {
    match kind {
        InitialTree::Linear => DimensionTree::linear(d, &(1..=d).collect::<Vec<_>>()),
        InitialTree::Balanced => DimensionTree::balanced(d),
        InitialTree::RandomLinear => {
            let mut order: Vec<usize> = (1..=d).collect();
            order.shuffle(rng);
            DimensionTree::linear(d, &order)
        }
    }
}

/// One adaptive fit on fresh samples.
pub fn run_trial(
    cfg: &ExperimentConfig,
    dist: &BenchmarkDistribution,
    n: usize,
    trial: usize,
    stream: u64,
) -> Result<(TrialResult, AdaptationState)> {
    let start = Instant::now();
    let mut rng = trial_rng(cfg.seed, stream);
    let seed: u64 = rng.random();
    let bases = dist.natural_bases(cfg.max_degree);
    let s = dist.sample(n, &mut rng)?;
    let s_test = dist.sample(cfg.n_test, &mut rng)?;
    let s_eps = dist.sample_reference(cfg.n_error, &mut rng)?;
    let (train, valid) = s.split(cfg.rank.validation_fraction, &mut rng);
    let tree = initial_tree(cfg.initial_tree, dist.d(), &mut rng)?;
    let learner_cfg = LearnerConfig { seed, ..cfg.learner.clone() };
    let tree_cfg = TreeProposalConfig { seed: seed ^ 0x5eed, ..cfg.tree.clone() };
    let state = adapt_ranks(&tree, &bases, &train, &valid, &learner_cfg, &cfg.rank, &tree_cfg)?;
    let g = &state.model;
    let test_risk = learner::test_risk(g, &s_test)?;
    let rel_error = learner::relative_error(g, &|x| dist.density(x), &s_eps)?;
    let max_risk_increase = state
        .risk_traces
        .iter()
        .flat_map(|t| t.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let res = TrialResult {
        trial,
        seed,
        n,
        test_risk,
        rel_error,
        complexity: g.storage_complexity(),
        tree_json: g.tree.to_json(),
        ranks: g.ranks(),
        elapsed_s: start.elapsed().as_secs_f64(),
        max_risk_increase,
        model: Some(g.clone()),
    };
    log::info!(
        "n={n} trial {trial}: risk {:.4e} error {:.4} complexity {} ({:.1}s)",
        res.test_risk,
        res.rel_error,
        res.complexity,
        res.elapsed_s
    );
    Ok((res, state))
}

pub fn aggregate(n: usize, rows: &[TrialResult]) -> Aggregate {
    let col = |f: &dyn Fn(&TrialResult) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let best = rows.iter().min_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).map(|r| r.trial).unwrap_or(0);
    Aggregate {
        n,
        test_risk: Range::of(&col(&|r| r.test_risk)),
        rel_error: Range::of(&col(&|r| r.rel_error)),
        complexity: Range::of(&col(&|r| r.complexity as f64)),
        best_trial: best,
    }
}

/// All trials for every training size, in parallel over trials; results
/// are ordered by size then trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dist = cfg.distribution.build()?;
    let jobs: Vec<(usize, usize)> =
        cfg.n_train.iter().enumerate().flat_map(|(i, _)| (0..cfg.trials).map(move |k| (i, k))).collect();
    let results: Vec<Result<TrialResult>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let stream = (i * cfg.trials + k) as u64;
            run_trial(cfg, &dist, cfg.n_train[i], k, stream).map(|r| r.0)
        })
        .collect();
    let trials: Vec<TrialResult> = results.into_iter().collect::<Result<_>>()?;
    let aggregates = cfg
        .n_train
        .iter()
        .map(|&n| {
            let rows: Vec<TrialResult> = trials.iter().filter(|r| r.n == n).cloned().collect();
            aggregate(n, &rows)
        })
        .collect();
    Ok(ExperimentOutput { trials, aggregates })
}

pub const RESULT_COLUMNS: [&str; 8] = ["trial", "seed", "n", "test_risk", "rel_error", "complexity", "tree_json", "elapsed_s"];

pub fn write_results_csv<W: Write>(w: W, rows: &[TrialResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULT_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            format!("{:e}", r.test_risk),
            format!("{:e}", r.rel_error),
            r.complexity.to_string(),
            r.tree_json.clone(),
            format!("{:.3}", r.elapsed_s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[Aggregate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n",
        "test_risk_mean",
        "test_risk_min",
        "test_risk_max",
        "rel_error_mean",
        "rel_error_min",
        "rel_error_max",
        "complexity_mean",
        "complexity_min",
        "complexity_max",
        "best_trial",
    ])?;
    for a in rows {
        let mut rec = vec![a.n.to_string()];
        for r in [a.test_risk, a.rel_error, a.complexity] {
            rec.extend([format!("{:e}", r.mean), format!("{:e}", r.min), format!("{:e}", r.max)]);
        }
        rec.push(a.best_trial.to_string());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Least-squares slope of `log ε` against `log n`.
pub fn convergence_slope(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Config("convergence needs at least two sample sizes".into()));
    }
    if points.iter().any(|p| p.0 == 0 || !(p.1 > 0.0)) {
        return Err(Error::Numerical("convergence points must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("convergence needs distinct sample sizes".into()));
    }
    Ok(sxy / sxx)
}

/// `(n, mean ε)` rows followed by the fitted slope.
pub fn emit_convergence<W: Write>(w: W, aggregates: &[Aggregate]) -> Result<f64> {
    let pts: Vec<(usize, f64)> = aggregates.iter().map(|a| (a.n, a.rel_error.mean)).collect();
    let slope = convergence_slope(&pts)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "rel_error_mean"])?;
    for (n, e) in &pts {
        out.write_record([n.to_string(), format!("{e:e}")])?;
    }
    out.write_record(["slope".to_string(), format!("{slope:e}")])?;
    out.flush()?;
    Ok(slope)
}
