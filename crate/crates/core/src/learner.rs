//! Empirical risk minimization with the L2 contrast
//! `γ(g, x) = ‖g‖² − 2 g(x)` over a fixed tree and ranks.
//!
//! With `Ψ^α` orthonormal the risk restricted to one core is
//! `‖C‖² − 2⟨m, C⟩` with `m = mean_i Ψ^α(x_i)`, minimized by `C = m`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bases::Basis;
use crate::contraction::{evaluate_batch, Engine, Features};
use crate::dimension_tree::{DimensionTree, NodeId};
use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::tensor::DenseTensor;
use crate::tree_tensor::TreeTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    None,
    WorkingSet,
    Thresholding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub max_sweeps: usize,
    /// Stop when a sweep lowers the risk by less than this fraction.
    pub stagnation_tol: f64,
    /// Pattern strategy for leaf cores. Indicator bases have a single
    /// pattern, so working sets only act on polynomial leaves.
    pub leaf_sparsity: Sparsity,
    pub interior_sparsity: Sparsity,
    /// Only consider sparse candidates that do not raise the empirical risk
    /// above that of the core being replaced.
    pub monotone: bool,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            stagnation_tol: 1e-6,
            leaf_sparsity: Sparsity::WorkingSet,
            interior_sparsity: Sparsity::None,
            monotone: true,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Config("learner.max_sweeps must be >= 1".into()));
        }
        if !(self.stagnation_tol >= 0.0) {
            return Err(Error::Config("learner.stagnation_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Fitted model with the empirical risk after every core update (the first
/// entry is the risk of the starting point).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: TreeTensor,
    pub risk_trace: Vec<f64>,
    pub sweeps: usize,
}

impl FitResult {
    /// Largest increase between consecutive risk values (≤ 0 when monotone).
    pub fn max_risk_increase(&self) -> f64 {
        self.risk_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `‖g‖² − (2/n) Σ_i g(x_i)`.
pub fn empirical_risk(g: &TreeTensor, s: &SampleSet) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySample);
    }
    let vals = evaluate_batch(g, s)?;
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(g.norm().powi(2) - 2.0 * mean)
}

/// Risk estimate on an independent sample; same formula as the empirical risk.
pub fn test_risk(g: &TreeTensor, s_test: &SampleSet) -> Result<f64> {
    empirical_risk(g, s_test)
}

/// `(Σ (f − g)² / Σ f²)^{1/2}` over points drawn from the reference measure.
pub fn relative_error(g: &TreeTensor, f: &dyn Fn(&[f64]) -> f64, s_eps: &SampleSet) -> Result<f64> {
    let vals = evaluate_batch(g, s_eps)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, gv) in vals.iter().enumerate() {
        let fv = f(s_eps.point(i));
        num += (fv - gv) * (fv - gv);
        den += fv * fv;
    }
    if den == 0.0 {
        return Err(Error::Numerical("reference density vanishes on the error sample".into()));
    }
    Ok((num / den).sqrt())
}

/// `mean_i Ψ^α(x_i)`; `g` must be orthonormalized at `alpha`.
pub fn core_update(g: &TreeTensor, alpha: NodeId, s: &SampleSet) -> Result<DenseTensor> {
    if g.orthonormal_root != Some(alpha) {
        return Err(Error::Config(format!("tensor is not orthonormalized at node {alpha}")));
    }
    let feats = Features::new(&g.bases, s)?;
    let mut e = Engine::new(&feats, g.tree.num_nodes());
    let (sum, _) = e.psi_moments(g, alpha);
    let n = s.n() as f64;
    Ok(DenseTensor { shape: g.cores[alpha].shape.clone(), data: sum.into_iter().map(|v| v / n).collect() })
}

/// `Ψ^α(x_i)` for all samples (`n x K^α`); `g` must be orthonormalized at `alpha`.
pub fn psi_samples(g: &TreeTensor, alpha: NodeId, s: &SampleSet) -> Result<Vec<f64>> {
    let feats = Features::new(&g.bases, s)?;
    let mut e = Engine::new(&feats, g.tree.num_nodes());
    Ok(e.psi_matrix(g, alpha))
}

/// A sparsity pattern: sorted flat indices into the core.
pub type Pattern = Vec<usize>;

/// Nested patterns for a core from its unconstrained update `mean`.
fn patterns(g: &TreeTensor, alpha: NodeId, mean: &[f64], strategy: Sparsity) -> Vec<Pattern> {
    let k = mean.len();
    let full: Pattern = (0..k).collect();
    match strategy {
        Sparsity::None => vec![full],
        Sparsity::WorkingSet => {
            if !g.tree.is_leaf(alpha) {
                return vec![full];
            }
            let r = g.rank(alpha);
            g.bases[g.tree.leaf_dim(alpha)].candidate_patterns().into_iter().map(|rows| (0..rows * r).collect()).collect()
        }
        Sparsity::Thresholding => {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| mean[b].abs().total_cmp(&mean[a].abs()).then(a.cmp(&b)));
            let mut out = Vec::new();
            let mut i = 0;
            while i < k {
                let level = mean[order[i]].abs();
                while i < k && mean[order[i]].abs() == level {
                    i += 1;
                }
                let mut p: Pattern = order[..i].to_vec();
                p.sort_unstable();
                out.push(p);
            }
            out
        }
    }
}

/// Candidate `(pattern, core)` pairs: the unconstrained update with entries
/// outside each pattern set to zero.
pub fn sparse_candidates(
    g: &TreeTensor,
    alpha: NodeId,
    s: &SampleSet,
    strategy: Sparsity,
) -> Result<Vec<(Pattern, DenseTensor)>> {
    let c = core_update(g, alpha, s)?;
    Ok(patterns(g, alpha, &c.data, strategy)
        .into_iter()
        .map(|p| {
            let mut d = DenseTensor::zeros(c.shape.clone());
            for &j in &p {
                d.data[j] = c.data[j];
            }
            (p, d)
        })
        .collect())
}

fn loo_from_sums(n: usize, norm2: f64, sumsq: f64) -> f64 {
    let nf = n as f64;
    -nf * nf / ((nf - 1.0) * (nf - 1.0)) * norm2 + (2.0 * nf - 1.0) / (nf * (nf - 1.0) * (nf - 1.0)) * sumsq
}

/// Closed-form leave-one-out risk of the pattern `j` given the per-sample
/// features `psi` (`n x k`).
pub fn loo_risk(pattern: &[usize], psi: &[f64], n: usize, k: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Config("leave-one-out needs at least two samples".into()));
    }
    if psi.len() != n * k || pattern.iter().any(|&j| j >= k) {
        return Err(Error::ShapeMismatch("psi samples do not match the pattern".into()));
    }
    let (mut norm2, mut sq) = (0.0, 0.0);
    for &j in pattern {
        let mut s = 0.0;
        for i in 0..n {
            let v = psi[i * k + j];
            s += v;
            sq += v * v;
        }
        let m = s / n as f64;
        norm2 += m * m;
    }
    Ok(loo_from_sums(n, norm2, sq))
}

/// The same estimator written with the pairwise sum over `i ≠ j`.
pub fn loo_risk_pairwise(pattern: &[usize], psi: &[f64], n: usize, k: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Config("leave-one-out needs at least two samples".into()));
    }
    let nf = n as f64;
    let mut total = 0.0;
    for &j in pattern {
        let mut sq = 0.0;
        let mut cross = 0.0;
        for a in 0..n {
            let va = psi[a * k + j];
            sq += va * va;
            for b in 0..n {
                if a != b {
                    cross += va * psi[b * k + j];
                }
            }
        }
        total += sq - nf / (nf - 1.0) * cross;
    }
    Ok(total / (nf * (nf - 1.0)))
}

/// Candidate with the smallest leave-one-out risk; ties go to the sparsest.
pub fn select_core(candidates: &[(Pattern, DenseTensor)], psi: &[f64], n: usize) -> Result<(Pattern, DenseTensor)> {
    let first = candidates.first().ok_or_else(|| Error::Config("no candidates".into()))?;
    if n < 2 {
        log::warn!("leave-one-out needs n >= 2; keeping the unconstrained update");
        return Ok(candidates.iter().max_by_key(|c| c.0.len()).unwrap().clone());
    }
    let k = first.1.len();
    let mut best: Option<(f64, &(Pattern, DenseTensor))> = None;
    for c in candidates {
        let r = loo_risk(&c.0, psi, n, k)?;
        let better = match best {
            None => true,
            Some((br, bc)) => r < br || (r == br && c.0.len() < bc.0.len()),
        };
        if better {
            best = Some((r, c));
        }
    }
    Ok(best.unwrap().1.clone())
}

/// Core visiting order: leaves, then interior nodes by decreasing level,
/// root last.
pub fn sweep_order(tree: &DimensionTree) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = (0..tree.num_nodes()).collect();
    v.sort_by_key(|&a| (!tree.is_leaf(a), std::cmp::Reverse(tree.level(a)), a));
    v
}

/// Alternating minimization starting from `g` on precomputed features.
pub(crate) fn fit_features(
    mut g: TreeTensor,
    feats: &Features,
    cfg: &LearnerConfig,
    max_sweeps: usize,
) -> Result<FitResult> {
    let n = feats.n();
    let order = sweep_order(&g.tree);
    let mut engine = Engine::new(feats, g.tree.num_nodes());
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut last_sweep_risk: Option<f64> = None;
    let mut warned = false;
    for _ in 0..max_sweeps {
        sweeps += 1;
        for &a in &order {
            engine.orthonormalize(&mut g, a)?;
            let (sum, sumsq) = engine.psi_moments(&g, a);
            let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
            let old = &g.cores[a].data;
            let norm_old: f64 = old.iter().map(|v| v * v).sum();
            let dot_old: f64 = old.iter().zip(&mean).map(|(c, m)| c * m).sum();
            let risk_old = norm_old - 2.0 * dot_old;
            if trace.is_empty() {
                trace.push(risk_old);
            }
            let strategy = if g.tree.is_leaf(a) { cfg.leaf_sparsity } else { cfg.interior_sparsity };
            let pats = patterns(&g, a, &mean, strategy);
            let chosen = if pats.len() == 1 {
                None
            } else if n < 2 {
                if !warned {
                    log::warn!("leave-one-out needs n >= 2; using unconstrained updates");
                    warned = true;
                }
                None
            } else {
                let mut best: Option<(f64, usize)> = None;
                for (l, p) in pats.iter().enumerate() {
                    let norm2: f64 = p.iter().map(|&j| mean[j] * mean[j]).sum();
                    if cfg.monotone && -norm2 > risk_old && p.len() < mean.len() {
                        continue;
                    }
                    let sq: f64 = p.iter().map(|&j| sumsq[j]).sum();
                    let r = loo_from_sums(n, norm2, sq);
                    let better = match best {
                        None => true,
                        Some((br, bl)) => r < br || (r == br && p.len() < pats[bl].len()),
                    };
                    if better {
                        best = Some((r, l));
                    }
                }
                best.map(|(_, l)| l)
            };
            let mut data = mean;
            if let Some(l) = chosen {
                let mut keep = vec![false; data.len()];
                for &j in &pats[l] {
                    keep[j] = true;
                }
                for (v, k) in data.iter_mut().zip(keep) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
            let norm2: f64 = data.iter().map(|v| v * v).sum();
            g.cores[a].data = data;
            engine.on_core_change(&g.tree, a);
            trace.push(-norm2);
        }
        let now = *trace.last().unwrap();
        if let Some(prev) = last_sweep_risk {
            if prev - now <= cfg.stagnation_tol * now.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        last_sweep_risk = Some(now);
    }
    Ok(FitResult { model: g, risk_trace: trace, sweeps })
}

/// Refits all cores starting from `g`.
pub fn fit_from(g: TreeTensor, s: &SampleSet, cfg: &LearnerConfig) -> Result<FitResult> {
    cfg.validate()?;
    let feats = Features::new(&g.bases, s)?;
    fit_features(g, &feats, cfg, cfg.max_sweeps)
}

/// Fit at fixed tree and ranks from a random orthonormal start.
pub fn fit_fixed(
    tree: &DimensionTree,
    ranks: &[usize],
    bases: &[Basis],
    s: &SampleSet,
    cfg: &LearnerConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = TreeTensor::random(tree.clone(), bases.to_vec(), ranks, &mut rng)?;
    fit_from(g, s, cfg)
}
