//! Per-sample contractions of a tree tensor over a fixed sample, cached per
//! node and invalidated as cores change.
//!
//! `up[α]` holds `u_α(x_i)` (n x r_α) and `down[α]` holds `w_α(x_i)`
//! (n x r_α), so that `g(x_i) = ⟨u_α(x_i), w_α(x_i)⟩` for every α.

use crate::bases::Basis;
use crate::dimension_tree::{DimensionTree, NodeId};
use crate::error::{Error, Result};
use crate::linalg;
use crate::samples::SampleSet;
use crate::tree_tensor::TreeTensor;

/// Basis evaluations per dimension, each `n x N_ν` row-major.
#[derive(Debug, Clone)]
pub struct Features {
    n: usize,
    phi: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl Features {
    pub fn new(bases: &[Basis], s: &SampleSet) -> Result<Self> {
        if bases.len() != s.d() {
            return Err(Error::ShapeMismatch(format!("{} bases for d = {}", bases.len(), s.d())));
        }
        let n = s.n();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut phi = Vec::with_capacity(bases.len());
        for (nu, b) in bases.iter().enumerate() {
            let k = b.size();
            let mut m = vec![0.0; n * k];
            for (i, x) in s.column(nu).enumerate() {
                b.eval_into(x, &mut m[i * k..(i + 1) * k])?;
            }
            phi.push(m);
        }
        Ok(Self { n, phi, sizes: bases.iter().map(|b| b.size()).collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn phi(&self, nu: usize) -> (&[f64], usize) {
        (&self.phi[nu], self.sizes[nu])
    }
}

/// Rows per block when forming Khatri–Rao products, bounding scratch memory.
fn block_rows(width: usize) -> usize {
    ((1usize << 20) / width.max(1)).clamp(1, 4096)
}

/// Row-wise Kronecker product of the blocks `rows lo..hi` of `mats`.
fn kr_block(mats: &[(&[f64], usize)], lo: usize, hi: usize, out: &mut Vec<f64>) -> usize {
    let width: usize = mats.iter().map(|m| m.1).product();
    out.clear();
    out.reserve((hi - lo) * width);
    let mut row = Vec::with_capacity(width);
    let mut next = Vec::with_capacity(width);
    for i in lo..hi {
        row.clear();
        row.push(1.0);
        for (m, k) in mats {
            next.clear();
            let r = &m[i * k..(i + 1) * k];
            for a in &row {
                for b in r {
                    next.push(a * b);
                }
            }
            std::mem::swap(&mut row, &mut next);
        }
        out.extend_from_slice(&row);
    }
    width
}

/// `Z M` where row `i` of `Z` is `⊗_j mats[j][i, :]`; `M` has `ncols` columns.
pub(crate) fn kr_apply(mats: &[(&[f64], usize)], n: usize, m: &[f64], ncols: usize) -> Vec<f64> {
    if mats.len() == 1 {
        return linalg::matmul(mats[0].0, m, n, mats[0].1, ncols);
    }
    let width: usize = mats.iter().map(|x| x.1).product();
    let step = block_rows(width);
    let mut out = Vec::with_capacity(n * ncols);
    let mut z = Vec::new();
    let mut lo = 0;
    while lo < n {
        let hi = (lo + step).min(n);
        kr_block(mats, lo, hi, &mut z);
        out.extend(linalg::matmul(&z, m, hi - lo, width, ncols));
        lo = hi;
    }
    out
}

/// Column sums of `Z` and of `Z ∘ Z`.
pub(crate) fn kr_moments(mats: &[(&[f64], usize)], n: usize) -> (Vec<f64>, Vec<f64>) {
    let width: usize = mats.iter().map(|x| x.1).product();
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    if mats.len() == 2 {
        // leaf-style product: Σ_i a_i ⊗ b_i = A^T B
        let (a, ka) = mats[0];
        let (b, kb) = mats[1];
        sum = linalg::matmul_tn(a, b, n, ka, kb);
        let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
        let b2: Vec<f64> = b.iter().map(|v| v * v).collect();
        sq = linalg::matmul_tn(&a2, &b2, n, ka, kb);
        return (sum, sq);
    }
    let step = block_rows(width);
    let mut z = Vec::new();
    let mut lo = 0;
    while lo < n {
        let hi = (lo + step).min(n);
        kr_block(mats, lo, hi, &mut z);
        for row in z.chunks_exact(width) {
            for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(row) {
                *s += v;
                *q += v * v;
            }
        }
        lo = hi;
    }
    (sum, sq)
}

pub(crate) struct Engine<'a> {
    pub feats: &'a Features,
    up: Vec<Option<Vec<f64>>>,
    down: Vec<Option<Vec<f64>>>,
}

impl<'a> Engine<'a> {
    pub fn new(feats: &'a Features, num_nodes: usize) -> Self {
        Self { feats, up: vec![None; num_nodes], down: vec![None; num_nodes] }
    }

    pub fn invalidate_all(&mut self) {
        self.up.iter_mut().for_each(|u| *u = None);
        self.down.iter_mut().for_each(|u| *u = None);
    }

    /// The core of `a` changed: `u` of `a` and its ancestors and `w` of every
    /// node outside that path are stale.
    pub fn on_core_change(&mut self, tree: &DimensionTree, a: NodeId) {
        let mut path = vec![a];
        let mut cur = a;
        while let Some(p) = tree.parent(cur) {
            path.push(p);
            cur = p;
        }
        for (b, d) in self.down.iter_mut().enumerate() {
            if !path.contains(&b) {
                *d = None;
            }
        }
        for b in path {
            self.up[b] = None;
        }
    }

    /// The orthogonality center moved across the edge above `a`; only
    /// `u_a` and `w_a` changed.
    pub fn on_edge_move(&mut self, a: NodeId) {
        self.up[a] = None;
        self.down[a] = None;
    }

    /// Moves the center of `g` to `alpha`, keeping the cache consistent.
    pub fn orthonormalize(&mut self, g: &mut TreeTensor, alpha: NodeId) -> Result<()> {
        if g.orthonormal_root.is_none() {
            self.invalidate_all();
        }
        for a in g.orthonormalize_at_logged(alpha)? {
            self.on_edge_move(a);
        }
        Ok(())
    }

    pub fn ensure_up(&mut self, g: &TreeTensor, a: NodeId) {
        if self.up[a].is_some() {
            return;
        }
        let t = &g.tree;
        let n = self.feats.n;
        let r = g.rank(a);
        let v = if t.is_leaf(a) {
            let (phi, k) = self.feats.phi(t.leaf_dim(a));
            linalg::matmul(phi, &g.cores[a].data, n, k, r)
        } else {
            for &c in t.children(a) {
                self.ensure_up(g, c);
            }
            let mats: Vec<(&[f64], usize)> =
                t.children(a).iter().map(|&c| (self.up[c].as_deref().unwrap(), g.rank(c))).collect();
            kr_apply(&mats, n, &g.cores[a].data, r)
        };
        self.up[a] = Some(v);
    }

    pub fn ensure_down(&mut self, g: &TreeTensor, a: NodeId) {
        if self.down[a].is_some() {
            return;
        }
        let t = &g.tree;
        let n = self.feats.n;
        let Some(p) = t.parent(a) else {
            self.down[a] = Some(vec![1.0; n]);
            return;
        };
        self.ensure_down(g, p);
        let siblings: Vec<NodeId> = t.children(p).iter().copied().filter(|&c| c != a).collect();
        for &s in &siblings {
            self.ensure_up(g, s);
        }
        let pos = t.child_position(a);
        let cp = &g.cores[p];
        let nd = cp.ndim();
        let mut perm: Vec<usize> = (0..nd).filter(|&x| x != pos).collect();
        perm.push(pos);
        let m = cp.permute(&perm);
        let mut mats: Vec<(&[f64], usize)> =
            siblings.iter().map(|&s| (self.up[s].as_deref().unwrap(), g.rank(s))).collect();
        mats.push((self.down[p].as_deref().unwrap(), g.rank(p)));
        let v = kr_apply(&mats, n, &m.data, g.rank(a));
        self.down[a] = Some(v);
    }

    /// Matrices whose row-wise Kronecker product is `Ψ^α(x_i)`.
    pub fn psi_factors(&mut self, g: &TreeTensor, a: NodeId) -> Vec<(&[f64], usize)> {
        let t = &g.tree;
        if !t.is_leaf(a) {
            for &c in t.children(a) {
                self.ensure_up(g, c);
            }
        }
        self.ensure_down(g, a);
        let mut mats: Vec<(&[f64], usize)> = if t.is_leaf(a) {
            vec![self.feats.phi(t.leaf_dim(a))]
        } else {
            t.children(a).iter().map(|&c| (self.up[c].as_deref().unwrap(), g.rank(c))).collect()
        };
        mats.push((self.down[a].as_deref().unwrap(), g.rank(a)));
        mats
    }

    /// Column sums of `Ψ^α(x_i)` and of its square, flattened like `C^α`.
    pub fn psi_moments(&mut self, g: &TreeTensor, a: NodeId) -> (Vec<f64>, Vec<f64>) {
        let n = self.feats.n;
        let mats = self.psi_factors(g, a);
        kr_moments(&mats, n)
    }

    /// All `Ψ^α(x_i)`, `n x K^α` row-major.
    pub fn psi_matrix(&mut self, g: &TreeTensor, a: NodeId) -> Vec<f64> {
        let n = self.feats.n;
        let mats = self.psi_factors(g, a);
        let mut z = Vec::new();
        kr_block(&mats, 0, n, &mut z);
        z
    }

    /// `g(x_i)` for every sample.
    pub fn values(&mut self, g: &TreeTensor) -> Vec<f64> {
        let root = g.tree.root();
        self.ensure_up(g, root);
        self.up[root].clone().unwrap()
    }
}

/// `g(x_i)` over a sample set, evaluated in blocks.
pub fn evaluate_batch(g: &TreeTensor, s: &SampleSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(s.n());
    let block = 20_000;
    let mut lo = 0;
    while lo < s.n() {
        let hi = (lo + block).min(s.n());
        let idx: Vec<usize> = (lo..hi).collect();
        let feats = Features::new(&g.bases, &s.subset(&idx))?;
        let mut e = Engine::new(&feats, g.tree.num_nodes());
        out.extend(e.values(g));
        lo = hi;
    }
    Ok(out)
}
