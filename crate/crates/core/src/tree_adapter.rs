//! Stochastic search over dimension trees: random sequences of node swaps,
//! each applied with controlled recompression, accepted when the storage
//! complexity does not grow.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dimension_tree::{DimensionTree, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, DEFAULT_FULL_CAP};
use crate::tree_tensor::{hosvd_split, Label, RankRule, TreeTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeProposalConfig {
    /// Exponent of the power law on the number of swaps.
    pub gamma1: f64,
    /// Weight exponent on the parent rank when drawing the first node.
    pub gamma2: f64,
    /// Decay exponent on the distance when drawing the second node.
    pub gamma3: f64,
    /// Relative tolerance per proposal.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub m_max: usize,
    pub seed: u64,
    /// Largest dense intermediate a swap may form.
    pub max_region_size: usize,
}

impl Default for TreeProposalConfig {
    fn default() -> Self {
        Self {
            gamma1: 2.0,
            gamma2: 2.0,
            gamma3: 2.0,
            epsilon: 1e-13,
            max_iterations: 100,
            m_max: 10,
            seed: 0,
            max_region_size: DEFAULT_FULL_CAP,
        }
    }
}

impl TreeProposalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3)] {
            if !(g > 0.0) {
                return Err(Error::Config(format!("tree.{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config("tree.epsilon must lie in [0, 1)".into()));
        }
        if self.m_max == 0 {
            return Err(Error::Config("tree.m_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// `P(m = k) ∝ k^{-γ1}` for `k = 1..=m_max`.
pub fn permutation_count_law(cfg: &TreeProposalConfig) -> Vec<f64> {
    let w: Vec<f64> = (1..=cfg.m_max).map(|k| (k as f64).powf(-cfg.gamma1)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

pub fn draw_permutation_count<R: Rng + ?Sized>(cfg: &TreeProposalConfig, rng: &mut R) -> usize {
    let law = permutation_count_law(cfg);
    WeightedIndex::new(&law).map(|w| w.sample(rng) + 1).unwrap_or(1)
}

/// Nodes that may be swapped with `a`: neither ascendant nor descendant,
/// with their weights `d(a, b)^{-γ3}`.
pub fn swap_targets(tree: &DimensionTree, a: NodeId, gamma3: f64) -> Vec<(NodeId, f64)> {
    let sa = tree.subset(a);
    (0..tree.num_nodes())
        .filter(|&b| b != a && b != tree.root())
        .filter(|&b| sa.is_disjoint(tree.subset(b)))
        .map(|b| (b, (tree.path_length(a, b).unwrap() as f64).powf(-gamma3)))
        .collect()
}

/// Draws `α ∝ r_{parent(α)}^{γ2}` then `β ∝ d(α, β)^{-γ3}`.
pub fn draw_swap_pair<R: Rng + ?Sized>(
    tree: &DimensionTree,
    ranks: &[usize],
    cfg: &TreeProposalConfig,
    rng: &mut R,
) -> Result<(NodeId, NodeId)> {
    let cands: Vec<NodeId> = (0..tree.num_nodes())
        .filter(|&a| a != tree.root() && !swap_targets(tree, a, cfg.gamma3).is_empty())
        .collect();
    if cands.is_empty() {
        return Err(Error::NoSwap("tree has no swappable pair".into()));
    }
    let w: Vec<f64> = cands.iter().map(|&a| (ranks[tree.parent(a).unwrap()] as f64).powf(cfg.gamma2)).collect();
    let a = cands[WeightedIndex::new(&w).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng)];
    let targets = swap_targets(tree, a, cfg.gamma3);
    let wb: Vec<f64> = targets.iter().map(|t| t.1).collect();
    let b = targets[WeightedIndex::new(&wb).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng)].0;
    Ok((a, b))
}

/// Interior nodes strictly between `a` and `b` plus their lowest common
/// ancestor, i.e. every node whose subset changes in the swap, and the
/// ancestor itself.
fn swap_region(tree: &DimensionTree, a: NodeId, b: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
    let l = tree.lca(a, b)?;
    let mut region = vec![l];
    for start in [a, b] {
        let mut cur = tree.parent(start).unwrap();
        while cur != l {
            region.push(cur);
            cur = tree.parent(cur).unwrap();
        }
    }
    Ok((l, region))
}

/// Contracts the cores of `region` below `v`; axes are labelled by hanging
/// child nodes plus `Up` for the rank of `v`.
fn contract_region(
    g: &TreeTensor,
    region: &[NodeId],
    v: NodeId,
    cap: usize,
) -> Result<(DenseTensor, Vec<Label>)> {
    let t = &g.tree;
    let mut cur = g.cores[v].clone();
    let mut labels: Vec<Label> = t.children(v).iter().map(|&c| Label::Node(c)).collect();
    labels.push(Label::Up);
    for &c in t.children(v) {
        if !region.contains(&c) {
            continue;
        }
        let (sub, sub_labels) = contract_region(g, region, c, cap)?;
        let pos = labels.iter().position(|l| *l == Label::Node(c)).unwrap();
        let size = cur.len() / cur.shape[pos] * (sub.len() / sub.shape.last().unwrap());
        if size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        cur = cur.contract_last(pos, &sub);
        labels.remove(pos);
        labels.extend(sub_labels[..sub_labels.len() - 1].iter().copied());
    }
    // keep Up last
    let up = labels.iter().position(|l| *l == Label::Up).unwrap();
    let mut perm: Vec<usize> = (0..labels.len()).filter(|&i| i != up).collect();
    perm.push(up);
    let labels: Vec<Label> = perm.iter().map(|&i| labels[i]).collect();
    Ok((cur.permute(&perm), labels))
}

fn apply_with_cap(g: &TreeTensor, a: NodeId, b: NodeId, eps: f64, cap: usize) -> Result<TreeTensor> {
    let t = &g.tree;
    if a == b || a >= t.num_nodes() || b >= t.num_nodes() || !t.subset(a).is_disjoint(t.subset(b)) {
        return Err(Error::NoSwap(format!("nodes {a} and {b} cannot be swapped")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidTolerance(eps));
    }
    let new_tree = t.swap_nodes(a, b)?;
    if t.parent(a) == t.parent(b) {
        let mut h = g.clone();
        h.tree = new_tree;
        return Ok(h);
    }
    let (l, region) = swap_region(t, a, b)?;
    let mut g = g.orthonormalized_at(l)?;
    let norm2 = g.cores[l].norm().powi(2);
    let (dense, labels) = contract_region(&g, &region, l, cap)?;
    let order: Vec<NodeId> = new_tree.post_order().into_iter().filter(|&v| v != l && region.contains(&v)).collect();
    let k = order.len().max(1) as f64;
    let rule = RankRule::Tail { threshold_sq: eps * eps / k * norm2 };
    let children_of = |v: NodeId| -> Vec<Label> { new_tree.children(v).iter().map(|&c| Label::Node(c)).collect() };
    let mut root_labels = children_of(l);
    root_labels.push(Label::Up);
    let (cores, top) = hosvd_split(dense, labels, &order, &children_of, &root_labels, &rule)?;
    for (v, c) in cores {
        g.cores[v] = c;
    }
    g.cores[l] = top;
    g.tree = new_tree;
    g.orthonormal_root = Some(l);
    g.validate()?;
    Ok(g)
}

/// Tensor on `swap_nodes(tree, a, b)` within relative distance `eps` of `g`.
pub fn apply_permutation(g: &TreeTensor, a: NodeId, b: NodeId, eps: f64) -> Result<TreeTensor> {
    apply_with_cap(g, a, b, eps, DEFAULT_FULL_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEvent {
    pub iteration: usize,
    pub swaps: Vec<(NodeId, NodeId)>,
    pub complexity: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct TreeSearch {
    pub model: TreeTensor,
    pub events: Vec<TreeEvent>,
    pub initial_complexity: usize,
}

impl TreeSearch {
    pub fn accepted_complexities(&self) -> Vec<usize> {
        std::iter::once(self.initial_complexity)
            .chain(self.events.iter().filter(|e| e.accepted).map(|e| e.complexity))
            .collect()
    }
}

/// Runs the proposal chain for `cfg.max_iterations` steps.
pub fn optimize_tree(g: &TreeTensor, cfg: &TreeProposalConfig) -> Result<TreeSearch> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    optimize_tree_with(g, cfg, &mut rng)
}

pub fn optimize_tree_with<R: Rng + ?Sized>(g: &TreeTensor, cfg: &TreeProposalConfig, rng: &mut R) -> Result<TreeSearch> {
    cfg.validate()?;
    let mut cur = g.clone();
    let initial = cur.storage_complexity();
    let mut best = initial;
    let mut events = Vec::new();
    for it in 0..cfg.max_iterations {
        let m = draw_permutation_count(cfg, rng);
        let mut cand = cur.clone();
        let mut swaps = Vec::with_capacity(m);
        let mut failed = false;
        for _ in 0..m {
            let (a, b) = match draw_swap_pair(&cand.tree, &cand.ranks(), cfg, rng) {
                Ok(p) => p,
                Err(Error::NoSwap(_)) => return Ok(TreeSearch { model: cur, events, initial_complexity: initial }),
                Err(e) => return Err(e),
            };
            swaps.push((a, b));
            match apply_with_cap(&cand, a, b, cfg.epsilon / m as f64, cfg.max_region_size) {
                Ok(h) => cand = h,
                Err(Error::TooLarge { size, .. }) => {
                    log::debug!("swap ({a}, {b}) skipped: intermediate of {size} entries");
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let c = cand.storage_complexity();
        let accepted = !failed && c <= best;
        if accepted {
            if c < best {
                log::info!("tree step {it}: complexity {best} -> {c}");
            }
            best = c;
            cur = cand;
        }
        events.push(TreeEvent { iteration: it, swaps, complexity: c, accepted });
    }
    Ok(TreeSearch { model: cur, events, initial_complexity: initial })
}
