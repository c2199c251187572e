//! Rank adaptation: fit, probe with a rank-one correction, estimate the
//! truncation error at every node from the corrected model's singular
//! values, and grow the ranks where that error is largest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bases::Basis;
use crate::contraction::Features;
use crate::dimension_tree::{DimensionTree, NodeId, RankVector};
use crate::error::{Error, Result};
use crate::learner::{self, fit_features, LearnerConfig};
use crate::linalg;
use crate::samples::SampleSet;
use crate::tensor::DenseTensor;
use crate::tree_adapter::{optimize_tree_with, TreeProposalConfig};
use crate::tree_tensor::TreeTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankAdapterConfig {
    pub theta: f64,
    /// Rounds without validation improvement before stopping.
    pub patience: usize,
    /// Complexity cap as a multiple of the training size.
    pub complexity_factor: f64,
    pub max_iterations: usize,
    /// Sweeps of the refit that only feeds the singular value estimates.
    pub refit_sweeps: usize,
    pub correction_sweeps: usize,
    pub validation_fraction: f64,
    /// Run the tree search after every fit.
    pub tree_adaptation: bool,
}

impl Default for RankAdapterConfig {
    fn default() -> Self {
        Self {
            theta: 0.8,
            patience: 2,
            complexity_factor: 10.0,
            max_iterations: 100,
            refit_sweeps: 3,
            correction_sweeps: 10,
            validation_fraction: 0.1,
            tree_adaptation: true,
        }
    }
}

impl RankAdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config("rank.theta must lie in [0, 1]".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("rank.validation_fraction must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 || self.refit_sweeps == 0 || self.correction_sweeps == 0 {
            return Err(Error::Config("rank iteration counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Leaf-to-root Grams `G_β = ⟨u^c_β, u^g_β⟩` (`r̃_β x r_β`).
fn upward_grams(g: &TreeTensor, c: &TreeTensor) -> Vec<Vec<f64>> {
    let t = &g.tree;
    let mut gr: Vec<Vec<f64>> = vec![Vec::new(); t.num_nodes()];
    for a in t.post_order() {
        let (rc, rg) = (c.rank(a), g.rank(a));
        gr[a] = if t.is_leaf(a) {
            let n = g.bases[t.leaf_dim(a)].size();
            linalg::matmul_tn(&c.cores[a].data, &g.cores[a].data, n, rc, rg)
        } else {
            let mut m = g.cores[a].clone();
            for (pos, &ch) in t.children(a).iter().enumerate() {
                m = m.mode_product(pos, &gr[ch], c.rank(ch));
            }
            let last = m.ndim() - 1;
            let (x, _, cols) = c.cores[a].matricize(&[last]);
            let (y, _, _) = m.matricize(&[last]);
            linalg::matmul_nt(&x, &y, rc, cols, rg)
        };
    }
    gr
}

/// Root-to-leaf Grams `H_β = ⟨w^c_β, w^g_β⟩` on the complements.
fn downward_grams(g: &TreeTensor, c: &TreeTensor, gr: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t = &g.tree;
    let mut h: Vec<Vec<f64>> = vec![Vec::new(); t.num_nodes()];
    h[t.root()] = vec![1.0];
    for p in t.pre_order() {
        if t.is_leaf(p) {
            continue;
        }
        let last = g.cores[p].ndim() - 1;
        for (pos, &a) in t.children(p).iter().enumerate() {
            let mut m = g.cores[p].mode_product(last, &h[p], c.rank(p));
            for (q, &s) in t.children(p).iter().enumerate() {
                if s != a {
                    m = m.mode_product(q, &gr[s], c.rank(s));
                }
            }
            let (x, _, cols) = c.cores[p].matricize(&[pos]);
            let (y, _, _) = m.matricize(&[pos]);
            h[a] = linalg::matmul_nt(&x, &y, c.rank(a), cols, g.rank(a));
        }
    }
    h
}

/// `S^α` with `⟨S^α, C̃⟩ = ⟨Ψ̃^α C̃, g⟩` for every `C̃` shaped like `c`'s core
/// at `α` (the bases are orthonormal, so leaf Grams are identities).
pub fn cross_term(g: &TreeTensor, c: &TreeTensor, alpha: NodeId) -> Result<DenseTensor> {
    if g.tree != c.tree || g.bases != c.bases {
        return Err(Error::ShapeMismatch("cross term needs a common tree and bases".into()));
    }
    let t = &g.tree;
    let gr = upward_grams(g, c);
    let h = downward_grams(g, c, &gr);
    let last = g.cores[alpha].ndim() - 1;
    let mut m = g.cores[alpha].mode_product(last, &h[alpha], c.rank(alpha));
    if !t.is_leaf(alpha) {
        for (pos, &ch) in t.children(alpha).iter().enumerate() {
            m = m.mode_product(pos, &gr[ch], c.rank(ch));
        }
    }
    Ok(m)
}

/// `⟨g, c⟩` in L².
pub fn inner(g: &TreeTensor, c: &TreeTensor) -> Result<f64> {
    if g.tree != c.tree || g.bases != c.bases {
        return Err(Error::ShapeMismatch("inner product needs a common tree and bases".into()));
    }
    Ok(upward_grams(g, c)[g.tree.root()][0])
}

/// Rank-one `c` minimizing the empirical risk of `g + c`, interior cores
/// fixed to 1, obtained by alternating over the leaf factors.
pub fn rank_one_correction(g: &TreeTensor, s: &SampleSet, sweeps: usize) -> Result<TreeTensor> {
    let feats = Features::new(&g.bases, s)?;
    rank_one_correction_features(g, &feats, sweeps, false)
}

/// Leave-one-out risk per coefficient of a correction factor with sample
/// sums `a`, squared sums `q` and cross term `s`.
fn correction_loo(n: usize, a: f64, q: f64, s: f64) -> f64 {
    let nf = n as f64;
    ((nf - 2.0) * a * a + q) / (nf * (nf - 1.0) * (nf - 1.0)) - s * s - 2.0 * (a * a - q) / (nf * (nf - 1.0))
        + 2.0 * s * a / nf
}

pub(crate) fn rank_one_correction_features(
    g: &TreeTensor,
    feats: &Features,
    sweeps: usize,
    sparse_leaves: bool,
) -> Result<TreeTensor> {
    let t = &g.tree;
    let d = t.d();
    let n = feats.n();
    // start from the empirical mean of each marginal feature
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|nu| {
            let (phi, k) = feats.phi(nu);
            let mut m = vec![0.0; k];
            for row in phi.chunks(k) {
                for (a, b) in m.iter_mut().zip(row) {
                    *a += b / n as f64;
                }
            }
            m
        })
        .collect();
    let mut c = TreeTensor::rank_one(t.clone(), g.bases.clone(), &v)?;
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for nu in 0..d {
            // unit norm factors elsewhere make Ψ̃ orthonormal at this leaf
            let mut prod = vec![1.0; n];
            for mu in 0..d {
                if mu == nu {
                    continue;
                }
                let nrm = v[mu].iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm > 0.0 {
                    v[mu].iter_mut().for_each(|x| *x /= nrm);
                }
                let (phi, k) = feats.phi(mu);
                for (p, row) in prod.iter_mut().zip(phi.chunks(k)) {
                    *p *= row.iter().zip(&v[mu]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            for mu in 0..d {
                c.cores[t.leaf_of_dim(mu)].data.copy_from_slice(&v[mu]);
            }
            let leaf = t.leaf_of_dim(nu);
            let sa = cross_term(g, &c, leaf)?;
            let (phi, k) = feats.phi(nu);
            let mut sum = vec![0.0; k];
            let mut sumsq = vec![0.0; k];
            for (p, row) in prod.iter().zip(phi.chunks(k)) {
                for j in 0..k {
                    let z = p * row[j];
                    sum[j] += z;
                    sumsq[j] += z * z;
                }
            }
            let mut new: Vec<f64> = sum.iter().zip(&sa.data).map(|(a, b)| a / n as f64 - b).collect();
            if sparse_leaves && n >= 2 {
                let pats = g.bases[nu].candidate_patterns();
                if pats.len() > 1 {
                    let loo: Vec<f64> = (0..k).map(|j| correction_loo(n, sum[j], sumsq[j], sa.data[j])).collect();
                    let mut best = (f64::INFINITY, k);
                    for rows in pats {
                        let r: f64 = loo[..rows].iter().sum();
                        if r < best.0 {
                            best = (r, rows);
                        }
                    }
                    new[best.1..].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let scale = new.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            let old_dir: f64 = v[nu].iter().zip(&new).map(|(a, b)| a * b).sum::<f64>()
                / v[nu].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            change = change.max(1.0 - (old_dir / scale).abs());
            v[nu] = new;
            c.cores[leaf].data.copy_from_slice(&v[nu]);
        }
        if change < 1e-10 {
            break;
        }
    }
    c.orthonormal_root = None;
    Ok(c)
}

/// `η_α = σ^α_{r_α + 1}(g̃)` for every non-root node (0 at the root or when
/// no such singular value exists).
pub fn truncation_scores(g_tilde: &TreeTensor, r: &[usize]) -> Result<Vec<f64>> {
    let sv = g_tilde.all_alpha_singular_values()?;
    Ok((0..g_tilde.tree.num_nodes())
        .map(|a| if a == g_tilde.tree.root() { 0.0 } else { sv[a].get(r[a]).copied().unwrap_or(0.0) })
        .collect())
}

/// First violated rank constraint: a core whose rank along one edge exceeds
/// the product of its other ranks, or a leaf rank above the basis size.
/// Returns the nodes whose increment would relieve it.
fn violation(tree: &DimensionTree, ranks: &[usize], leaf_dims: &[usize]) -> Option<Vec<NodeId>> {
    for a in 0..tree.num_nodes() {
        if tree.is_leaf(a) && ranks[a] > leaf_dims[tree.leaf_dim(a)] {
            return Some(Vec::new());
        }
    }
    for p in tree.internal() {
        let mut edges: Vec<NodeId> = tree.children(p).to_vec();
        if p != tree.root() {
            edges.push(p);
        }
        let total: usize = edges.iter().map(|&e| ranks[e]).product();
        for &e in &edges {
            if ranks[e] * ranks[e] > total {
                return Some(edges.iter().copied().filter(|&x| x != e).collect());
            }
        }
    }
    None
}

/// Smallest greedy superset of `set` (by score) whose increments keep the
/// ranks admissible, or `None`.
fn close_selection(
    tree: &DimensionTree,
    scores: &[f64],
    r: &[usize],
    leaf_dims: &[usize],
    mut set: Vec<NodeId>,
) -> Option<Vec<NodeId>> {
    loop {
        let mut ranks = r.to_vec();
        for &a in &set {
            ranks[a] += 1;
        }
        match violation(tree, &ranks, leaf_dims) {
            None => return Some(set),
            Some(fixes) => {
                let b = fixes
                    .into_iter()
                    .filter(|b| !set.contains(b))
                    .filter(|&b| !tree.is_leaf(b) || ranks[b] < leaf_dims[tree.leaf_dim(b)])
                    .max_by(|&x, &y| scores[x].total_cmp(&scores[y]).then(y.cmp(&x)))?;
                set.push(b);
            }
        }
    }
}

/// Nodes whose score reaches `θ max η`, kept only when the incremented rank
/// vector stays admissible. An increment that breaks a rank constraint is
/// completed by the best scored neighbours that restore it.
pub fn select_nodes(tree: &DimensionTree, scores: &[f64], theta: f64, r: &[usize], leaf_dims: &[usize]) -> Vec<NodeId> {
    let max = scores.iter().cloned().fold(0.0, f64::max);
    let thr = theta * max;
    let mut order: Vec<NodeId> =
        (0..tree.num_nodes()).filter(|&a| a != tree.root() && scores[a] >= thr && (max > 0.0 || theta == 0.0)).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<NodeId> = Vec::new();
    for a in order {
        if chosen.contains(&a) {
            continue;
        }
        let mut trial = chosen.clone();
        trial.push(a);
        if let Some(set) = close_selection(tree, scores, r, leaf_dims, trial) {
            chosen = set;
        }
    }
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptationRecord {
    pub iteration: usize,
    pub ranks: RankVector,
    pub tree: DimensionTree,
    pub complexity: usize,
    pub train_risk: f64,
    pub validation_risk: f64,
    #[serde(skip)]
    pub model: Option<TreeTensor>,
}

#[derive(Debug, Clone)]
pub struct AdaptationState {
    pub iteration: usize,
    /// Model with the lowest validation risk.
    pub model: TreeTensor,
    pub ranks: RankVector,
    pub history: Vec<AdaptationRecord>,
    /// Empirical risk after each core update, over all fits.
    pub risk_traces: Vec<Vec<f64>>,
}

impl AdaptationState {
    pub fn risk_history(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.validation_risk).collect()
    }

    pub fn complexity_history(&self) -> Vec<usize> {
        self.history.iter().map(|h| h.complexity).collect()
    }
}

/// Joint rank (and optionally tree) adaptation on `s`, stopping and
/// selecting on `s_valid`.
pub fn adapt_ranks(
    tree: &DimensionTree,
    bases: &[Basis],
    s: &SampleSet,
    s_valid: &SampleSet,
    learner_cfg: &LearnerConfig,
    cfg: &RankAdapterConfig,
    tree_cfg: &TreeProposalConfig,
) -> Result<AdaptationState> {
    cfg.validate()?;
    learner_cfg.validate()?;
    tree_cfg.validate()?;
    if s.is_empty() || s_valid.is_empty() {
        return Err(Error::EmptySample);
    }
    let feats = Features::new(bases, s)?;
    let leaf_dims: Vec<usize> = bases.iter().map(|b| b.size()).collect();
    let cap = (cfg.complexity_factor * s.n() as f64) as usize;
    let mut tree_rng = ChaCha8Rng::seed_from_u64(tree_cfg.seed);

    // start from the rank-one fit: random starts can stall far from it
    let sparse = learner_cfg.leaf_sparsity != crate::learner::Sparsity::None;
    let ranks = vec![1; tree.num_nodes()];
    let zero = TreeTensor::zeros(tree.clone(), bases.to_vec(), &ranks)?;
    let mut g = rank_one_correction_features(&zero, &feats, cfg.correction_sweeps, sparse)?;
    g.orthonormalize_at(g.tree.root())?;
    let mut best: Option<(f64, TreeTensor)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut traces = Vec::new();
    for it in 0..cfg.max_iterations {
        let fit = fit_features(g, &feats, learner_cfg, learner_cfg.max_sweeps)?;
        traces.push(fit.risk_trace.clone());
        g = fit.model;
        if cfg.tree_adaptation && it > 0 {
            let search = optimize_tree_with(&g, tree_cfg, &mut tree_rng)?;
            if search.model.tree != g.tree {
                // refit on the new tree so the cores are empirical minimizers again
                let fit = fit_features(search.model, &feats, learner_cfg, learner_cfg.max_sweeps)?;
                traces.push(fit.risk_trace.clone());
                g = fit.model;
            }
        }
        let train_risk = *traces.last().unwrap().last().unwrap();
        let validation_risk = learner::test_risk(&g, s_valid)?;
        let complexity = g.storage_complexity();
        log::debug!("rank step {it}: ranks {:?} complexity {complexity} validation {validation_risk:.5e}", g.ranks());
        history.push(AdaptationRecord {
            iteration: it,
            ranks: g.ranks(),
            tree: g.tree.clone(),
            complexity,
            train_risk,
            validation_risk,
            model: Some(g.clone()),
        });
        match &best {
            Some((b, _)) if validation_risk >= *b => since_best += 1,
            _ => {
                best = Some((validation_risk, g.clone()));
                since_best = 0;
            }
        }
        if since_best >= cfg.patience || complexity >= cap {
            break;
        }
        // probe which ranks to grow
        let c = rank_one_correction_features(&g, &feats, cfg.correction_sweeps, sparse)?;
        let g_plus = g.add(&c)?;
        let refit = fit_features(g_plus, &feats, learner_cfg, cfg.refit_sweeps)?;
        let r = g.ranks();
        let scores = truncation_scores(&refit.model, &r)?;
        let selected = select_nodes(&g.tree, &scores, cfg.theta, &r, &leaf_dims);
        if selected.is_empty() {
            break;
        }
        let mut new_ranks = r.clone();
        for &a in &selected {
            new_ranks[a] += 1;
        }
        g = refit.model.truncate_to_ranks(&new_ranks)?;
        if g.ranks() != new_ranks {
            // truncation can only cut below the requested ranks when the
            // corrected model itself is rank deficient: pad with zeros
            g = pad_ranks(&g, &new_ranks)?;
        }
    }
    let (_, model) = best.expect("at least one fit");
    Ok(AdaptationState { iteration: history.len(), ranks: model.ranks(), model, history, risk_traces: traces })
}

/// Embeds `g` into larger ranks with zero blocks, then orthonormalizes.
fn pad_ranks(g: &TreeTensor, ranks: &[usize]) -> Result<TreeTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut z = TreeTensor::random(g.tree.clone(), g.bases.clone(), ranks, &mut rng)?;
    for a in 0..z.tree.num_nodes() {
        let src = &g.cores[a];
        let dst = &mut z.cores[a];
        dst.data.iter_mut().for_each(|v| *v *= 1e-8);
        let st_d = crate::tensor::strides(&dst.shape);
        let nd = src.ndim();
        let mut idx = vec![0usize; nd];
        for &v in &src.data {
            let pos: usize = (0..nd).map(|k| idx[k] * st_d[k]).sum();
            dst.data[pos] = v;
            for k in (0..nd).rev() {
                idx[k] += 1;
                if idx[k] < src.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
    z.orthonormal_root = None;
    z.orthonormalize_at(z.tree.root())?;
    Ok(z)
}
