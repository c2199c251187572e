//! Tree tensor networks: cores per node of a dimension tree, on top of one
//! orthonormal basis per dimension.
//!
//! Core layout: a leaf core is `N x r`, an interior core is
//! `[r_{c1}, …, r_{ck}, r]` with children in canonical order. The root rank
//! is 1. Everything is row-major.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bases::Basis;
use crate::dimension_tree::{DimSet, DimensionTree, NodeId, RankVector};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{DenseTensor, DEFAULT_FULL_CAP};

/// Dense coefficient tensor `g[i_1, …, i_d]`, first dimension slowest.
pub type FullTensor = DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeTensor {
    pub tree: DimensionTree,
    pub bases: Vec<Basis>,
    pub cores: Vec<DenseTensor>,
    /// Node at which the network is currently orthonormalized, if known.
    pub orthonormal_root: Option<NodeId>,
}

/// How many singular values to keep at each SVD of a sweep.
#[derive(Debug, Clone)]
pub(crate) enum RankRule<'a> {
    /// Keep values while the discarded tail energy stays above `threshold_sq`.
    Tail { threshold_sq: f64 },
    /// Keep at most `ranks[node]` values.
    Fixed(&'a [usize]),
}

impl RankRule<'_> {
    fn rank(&self, node: NodeId, s: &[f64]) -> usize {
        match self {
            RankRule::Tail { threshold_sq } => linalg::rank_for_tail(s, *threshold_sq),
            RankRule::Fixed(r) => r[node].min(s.len()).max(1),
        }
    }
}

/// Axis labels used while splitting a dense tensor over a (sub)tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Label {
    /// An external leg kept as is (dimension index or outer node id).
    Leg(usize),
    /// The rank axis of a tree node.
    Node(NodeId),
    /// The rank axis towards the parent of the local root.
    Up,
}

/// Leaves-to-root truncated HOSVD of `t` (axes labelled by `labels`).
/// `order` lists the nodes to split off, children first; `children_of`
/// gives the labels each node's core is built on. The remainder, permuted
/// to `root_labels`, is returned as the last element.
pub(crate) fn hosvd_split(
    mut t: DenseTensor,
    mut labels: Vec<Label>,
    order: &[NodeId],
    children_of: &dyn Fn(NodeId) -> Vec<Label>,
    root_labels: &[Label],
    rule: &RankRule<'_>,
) -> Result<(Vec<(NodeId, DenseTensor)>, DenseTensor)> {
    let mut cores = Vec::with_capacity(order.len() + 1);
    for &a in order {
        let ch = children_of(a);
        let axes: Vec<usize> = ch
            .iter()
            .map(|l| labels.iter().position(|x| x == l).expect("label present"))
            .collect();
        let (m, rows, cols) = t.matricize(&axes);
        let (u, s) = linalg::left_svd(&m, rows, cols)?;
        let kfull = s.len();
        let k = rule.rank(a, &s);
        let mut uk = Vec::with_capacity(rows * k);
        for i in 0..rows {
            uk.extend_from_slice(&u[i * kfull..i * kfull + k]);
        }
        let rest = linalg::matmul_tn(&uk, &m, rows, k, cols);
        let mut shape: Vec<usize> = axes.iter().map(|&x| t.shape[x]).collect();
        shape.push(k);
        cores.push((a, DenseTensor { shape, data: uk }));
        let mut new_shape = vec![k];
        let mut new_labels = vec![Label::Node(a)];
        for (i, l) in labels.iter().enumerate() {
            if !axes.contains(&i) {
                new_shape.push(t.shape[i]);
                new_labels.push(*l);
            }
        }
        t = DenseTensor { shape: new_shape, data: rest };
        labels = new_labels;
    }
    let perm: Vec<usize> = root_labels
        .iter()
        .map(|l| labels.iter().position(|x| x == l).expect("root label present"))
        .collect();
    if perm.len() != labels.len() {
        return Err(Error::ShapeMismatch("leftover axes after split".into()));
    }
    Ok((cores, t.permute(&perm)))
}

/// Contracts `core` with one vector per axis except `free`, returning the
/// vector along the free axis.
fn contract_all_but(core: &DenseTensor, vecs: &[&[f64]], free: usize) -> Vec<f64> {
    let nd = core.ndim();
    let mut perm = vec![free];
    perm.extend((0..nd).filter(|&a| a != free));
    let mut data = core.permute(&perm).data;
    let mut axes_vecs: Vec<&[f64]> = Vec::new();
    let mut j = 0;
    for a in 0..nd {
        if a == free {
            continue;
        }
        axes_vecs.push(vecs[j]);
        j += 1;
    }
    for v in axes_vecs.iter().rev() {
        let k = v.len();
        let rows = data.len() / k;
        let mut next = vec![0.0; rows];
        for (r, out) in next.iter_mut().enumerate() {
            *out = data[r * k..(r + 1) * k].iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        data = next;
    }
    data
}

fn kron(vs: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for v in vs {
        let mut next = Vec::with_capacity(out.len() * v.len());
        for a in &out {
            for b in v.iter() {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// Copies `src` into `dst` at the given per-axis offsets.
fn embed(dst: &mut DenseTensor, src: &DenseTensor, offsets: &[usize]) {
    let dst_st = crate::tensor::strides(&dst.shape);
    let nd = src.ndim();
    let mut idx = vec![0usize; nd];
    for &v in &src.data {
        let pos: usize = (0..nd).map(|a| (idx[a] + offsets[a]) * dst_st[a]).sum();
        dst.data[pos] = v;
        for a in (0..nd).rev() {
            idx[a] += 1;
            if idx[a] < src.shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl TreeTensor {
    pub fn new(tree: DimensionTree, bases: Vec<Basis>, cores: Vec<DenseTensor>) -> Result<Self> {
        let g = TreeTensor { tree, bases, cores, orthonormal_root: None };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tree;
        if self.bases.len() != t.d() {
            return Err(Error::ShapeMismatch(format!("{} bases for d = {}", self.bases.len(), t.d())));
        }
        for b in &self.bases {
            b.validate()?;
        }
        if self.cores.len() != t.num_nodes() {
            return Err(Error::ShapeMismatch(format!("{} cores for {} nodes", self.cores.len(), t.num_nodes())));
        }
        for a in 0..t.num_nodes() {
            let c = &self.cores[a];
            if c.data.len() != c.shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!("core {a} data does not match its shape")));
            }
            let expect: Vec<usize> = if t.is_leaf(a) {
                vec![self.bases[t.leaf_dim(a)].size(), *c.shape.last().unwrap_or(&0)]
            } else {
                let mut s: Vec<usize> = t.children(a).iter().map(|&ch| self.rank(ch)).collect();
                s.push(*c.shape.last().unwrap_or(&0));
                s
            };
            if c.shape != expect || c.shape.contains(&0) {
                return Err(Error::ShapeMismatch(format!("core {a} has shape {:?}, expected {expect:?}", c.shape)));
            }
        }
        if self.rank(t.root()) != 1 {
            return Err(Error::InvalidRanks("root rank must be 1".into()));
        }
        Ok(())
    }

    pub fn rank(&self, a: NodeId) -> usize {
        *self.cores[a].shape.last().unwrap_or(&0)
    }

    pub fn ranks(&self) -> RankVector {
        (0..self.cores.len()).map(|a| self.rank(a)).collect()
    }

    pub fn leaf_dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.size()).collect()
    }

    pub fn storage_complexity(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    fn core_shapes(tree: &DimensionTree, bases: &[Basis], ranks: &[usize]) -> Vec<Vec<usize>> {
        (0..tree.num_nodes())
            .map(|a| {
                if tree.is_leaf(a) {
                    vec![bases[tree.leaf_dim(a)].size(), ranks[a]]
                } else {
                    let mut s: Vec<usize> = tree.children(a).iter().map(|&c| ranks[c]).collect();
                    s.push(ranks[a]);
                    s
                }
            })
            .collect()
    }

    pub fn zeros(tree: DimensionTree, bases: Vec<Basis>, ranks: &[usize]) -> Result<Self> {
        tree.check_admissible(ranks, &bases.iter().map(|b| b.size()).collect::<Vec<_>>())?;
        let cores = Self::core_shapes(&tree, &bases, ranks).into_iter().map(DenseTensor::zeros).collect();
        Self::new(tree, bases, cores)
    }

    /// Standard normal cores, then orthonormalized at the root.
    pub fn random<R: Rng + ?Sized>(tree: DimensionTree, bases: Vec<Basis>, ranks: &[usize], rng: &mut R) -> Result<Self> {
        let mut g = Self::zeros(tree, bases, ranks)?;
        for c in g.cores.iter_mut() {
            for v in c.data.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        g.orthonormalize_at(g.tree.root())?;
        Ok(g)
    }

    /// Rank-one tensor `∏_ν ⟨Φ_ν(x_ν), v_ν⟩` (vectors indexed by dimension).
    pub fn rank_one(tree: DimensionTree, bases: Vec<Basis>, vectors: &[Vec<f64>]) -> Result<Self> {
        let ranks = vec![1; tree.num_nodes()];
        let mut g = Self::zeros(tree, bases, &ranks)?;
        for a in 0..g.tree.num_nodes() {
            if g.tree.is_leaf(a) {
                let v = &vectors[g.tree.leaf_dim(a)];
                if v.len() != g.cores[a].len() {
                    return Err(Error::ShapeMismatch("rank-one factor length".into()));
                }
                g.cores[a].data.copy_from_slice(v);
            } else {
                g.cores[a].data[0] = 1.0;
            }
        }
        Ok(g)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.tree.d() {
            return Err(Error::ShapeMismatch(format!("point of length {} for d = {}", x.len(), self.tree.d())));
        }
        Ok(())
    }

    /// Per-node upward vectors `u_α(x)` (length `r_α`).
    pub fn upward_vectors(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(x)?;
        let t = &self.tree;
        let mut up: Vec<Vec<f64>> = vec![vec![]; t.num_nodes()];
        for a in t.post_order() {
            let c = &self.cores[a];
            let r = self.rank(a);
            let input = if t.is_leaf(a) {
                self.bases[t.leaf_dim(a)].eval(x[t.leaf_dim(a)])?
            } else {
                let vs: Vec<&[f64]> = t.children(a).iter().map(|&ch| up[ch].as_slice()).collect();
                kron(&vs)
            };
            let mut out = vec![0.0; r];
            for (i, xi) in input.iter().enumerate() {
                if *xi != 0.0 {
                    for (o, cv) in out.iter_mut().zip(&c.data[i * r..(i + 1) * r]) {
                        *o += xi * cv;
                    }
                }
            }
            up[a] = out;
        }
        Ok(up)
    }

    /// Per-node downward vectors `w_α(x)` given the upward ones.
    pub fn downward_vectors(&self, up: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let t = &self.tree;
        let mut down: Vec<Vec<f64>> = vec![vec![]; t.num_nodes()];
        down[t.root()] = vec![1.0];
        for p in t.pre_order() {
            let ch = t.children(p);
            for (j, &c) in ch.iter().enumerate() {
                let mut vecs: Vec<&[f64]> = ch.iter().filter(|&&o| o != c).map(|&o| up[o].as_slice()).collect();
                vecs.push(&down[p]);
                let w = contract_all_but(&self.cores[p], &vecs, j);
                down[c] = w;
            }
        }
        down
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.upward_vectors(x)?[self.tree.root()][0])
    }

    /// `Ψ^α(x)`, shaped like `C^α`, with `⟨Ψ^α(x), C^α⟩ = g(x)`.
    pub fn psi_alpha(&self, alpha: NodeId, x: &[f64]) -> Result<DenseTensor> {
        if alpha >= self.tree.num_nodes() {
            return Err(Error::InvalidTree(format!("unknown node {alpha}")));
        }
        let up = self.upward_vectors(x)?;
        let down = self.downward_vectors(&up);
        let t = &self.tree;
        let phi;
        let mut vs: Vec<&[f64]> = if t.is_leaf(alpha) {
            phi = self.bases[t.leaf_dim(alpha)].eval(x[t.leaf_dim(alpha)])?;
            vec![&phi]
        } else {
            t.children(alpha).iter().map(|&c| up[c].as_slice()).collect()
        };
        vs.push(&down[alpha]);
        Ok(DenseTensor { shape: self.cores[alpha].shape.clone(), data: kron(&vs) })
    }

    /// Dense coefficient tensor; errors if it would exceed `cap` entries.
    pub fn full_tensor_capped(&self, cap: usize) -> Result<FullTensor> {
        let dims = self.leaf_dims();
        let size = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
        if size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        let t = &self.tree;
        // per node: tensor over its dimensions (increasing) then its rank axis
        let mut part: Vec<Option<(DenseTensor, Vec<usize>)>> = vec![None; t.num_nodes()];
        for a in t.post_order() {
            if t.is_leaf(a) {
                part[a] = Some((self.cores[a].clone(), vec![t.leaf_dim(a)]));
                continue;
            }
            let mut cur = self.cores[a].clone();
            let mut labels: Vec<Option<usize>> = vec![None; cur.ndim()]; // None = pending child / rank
            for &c in t.children(a) {
                let (pt, dims_c) = part[c].take().unwrap();
                // child's rank axis is last in pt; contract with axis for this child
                let axis = labels.iter().position(|l| l.is_none()).unwrap();
                cur = cur.contract_last(axis, &pt);
                labels.remove(axis);
                labels.extend(dims_c.iter().map(|&d| Some(d)));
            }
            // remaining None is the rank axis of a
            let mut dims_a: Vec<usize> = labels.iter().flatten().copied().collect();
            dims_a.sort_unstable();
            let mut perm: Vec<usize> =
                dims_a.iter().map(|d| labels.iter().position(|l| *l == Some(*d)).unwrap()).collect();
            perm.push(labels.iter().position(|l| l.is_none()).unwrap());
            part[a] = Some((cur.permute(&perm), dims_a));
        }
        let (mut full, _) = part[t.root()].take().unwrap();
        full.shape.pop();
        Ok(full)
    }

    pub fn full_tensor(&self) -> Result<FullTensor> {
        self.full_tensor_capped(DEFAULT_FULL_CAP)
    }

    // --- orthonormalization -------------------------------------------------

    /// Moves the orthogonality center from `a` to its parent.
    fn move_up(&mut self, a: NodeId) {
        let p = self.tree.parent(a).expect("non-root");
        let r = self.rank(a);
        let rows = self.cores[a].len() / r;
        let (q, rr, k) = linalg::qr(&self.cores[a].data, rows, r);
        let mut shape = self.cores[a].shape.clone();
        *shape.last_mut().unwrap() = k;
        self.cores[a] = DenseTensor { shape, data: q };
        let pos = self.tree.child_position(a);
        self.cores[p] = self.cores[p].mode_product(pos, &rr, k);
    }

    /// Moves the orthogonality center from `p` to its child `a`.
    fn move_down(&mut self, a: NodeId) {
        let p = self.tree.parent(a).expect("non-root");
        let pos = self.tree.child_position(a);
        let cp = &self.cores[p];
        let nd = cp.ndim();
        let mut perm: Vec<usize> = (0..nd).filter(|&x| x != pos).collect();
        perm.push(pos);
        let pm = cp.permute(&perm);
        let ra = cp.shape[pos];
        let rows = pm.len() / ra;
        let (q, rr, k) = linalg::qr(&pm.data, rows, ra);
        let mut qshape: Vec<usize> = perm[..nd - 1].iter().map(|&x| cp.shape[x]).collect();
        qshape.push(k);
        let qt = DenseTensor { shape: qshape, data: q };
        // undo the permutation: axis `pos` currently sits last
        let mut inv = vec![0; nd];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        self.cores[p] = qt.permute(&inv);
        // C^a[..., j] = Σ_l R[j, l] C^a[..., l]
        let ca = &self.cores[a];
        let rows_a = ca.len() / ra;
        let data = linalg::matmul_nt(&ca.data, &rr, rows_a, ra, k);
        let mut shape = ca.shape.clone();
        *shape.last_mut().unwrap() = k;
        self.cores[a] = DenseTensor { shape, data };
    }

    /// Reorganizes the cores (same function) so that `Ψ^α` is orthonormal.
    pub fn orthonormalize_at(&mut self, alpha: NodeId) -> Result<()> {
        self.orthonormalize_at_logged(alpha).map(|_| ())
    }

    /// Like [`Self::orthonormalize_at`], returning the nodes whose parent
    /// edge was crossed by the center.
    pub fn orthonormalize_at_logged(&mut self, alpha: NodeId) -> Result<Vec<NodeId>> {
        let mut moved = Vec::new();
        if alpha >= self.tree.num_nodes() {
            return Err(Error::InvalidTree(format!("unknown node {alpha}")));
        }
        let from = match self.orthonormal_root {
            Some(c) => c,
            None => {
                for a in self.tree.post_order() {
                    if a != self.tree.root() {
                        self.move_up(a);
                        moved.push(a);
                    }
                }
                self.tree.root()
            }
        };
        let q = self.tree.lca(from, alpha)?;
        let mut cur = from;
        while cur != q {
            self.move_up(cur);
            moved.push(cur);
            cur = self.tree.parent(cur).unwrap();
        }
        let mut down = vec![];
        let mut x = alpha;
        while x != q {
            down.push(x);
            x = self.tree.parent(x).unwrap();
        }
        for &a in down.iter().rev() {
            self.move_down(a);
            moved.push(a);
        }
        self.orthonormal_root = Some(alpha);
        Ok(moved)
    }

    pub fn orthonormalized_at(&self, alpha: NodeId) -> Result<Self> {
        let mut g = self.clone();
        g.orthonormalize_at(alpha)?;
        Ok(g)
    }

    /// `L²` norm of the represented function.
    pub fn norm(&self) -> f64 {
        match self.orthonormal_root {
            Some(a) => self.cores[a].norm(),
            None => self.orthonormalized_at(self.tree.root()).map(|g| g.cores[g.tree.root()].norm()).unwrap_or(0.0),
        }
    }

    pub fn scale(&mut self, c: f64) {
        let a = self.orthonormal_root.unwrap_or(self.tree.root());
        for v in self.cores[a].data.iter_mut() {
            *v *= c;
        }
    }

    fn same_structure(&self, h: &TreeTensor) -> Result<()> {
        if self.tree != h.tree || self.bases != h.bases {
            return Err(Error::ShapeMismatch("tensors live on different trees or bases".into()));
        }
        Ok(())
    }

    /// Block-diagonal sum; non-root ranks add up.
    pub fn add(&self, h: &TreeTensor) -> Result<TreeTensor> {
        self.same_structure(h)?;
        let t = &self.tree;
        let mut ranks: Vec<usize> = (0..t.num_nodes()).map(|a| self.rank(a) + h.rank(a)).collect();
        ranks[t.root()] = 1;
        let shapes = Self::core_shapes(t, &self.bases, &ranks);
        let mut cores = Vec::with_capacity(shapes.len());
        for (a, shape) in shapes.into_iter().enumerate() {
            let mut c = DenseTensor::zeros(shape);
            let zeros = vec![0; c.ndim()];
            embed(&mut c, &self.cores[a], &zeros);
            let mut off: Vec<usize> = if t.is_leaf(a) {
                vec![0]
            } else {
                t.children(a).iter().map(|&ch| self.rank(ch)).collect()
            };
            off.push(if a == t.root() { 0 } else { self.rank(a) });
            embed(&mut c, &h.cores[a], &off);
            cores.push(c);
        }
        Ok(TreeTensor { tree: t.clone(), bases: self.bases.clone(), cores, orthonormal_root: None })
    }

    // --- singular values and truncation -------------------------------------

    /// Core of `p` matricized with the axis of child `a` as rows.
    fn child_matricization(&self, a: NodeId) -> (Vec<f64>, usize, usize) {
        let p = self.tree.parent(a).unwrap();
        self.cores[p].matricize(&[self.tree.child_position(a)])
    }

    /// Singular values of the α-matricization, padded with zeros to `r_α`.
    pub fn alpha_singular_values(&self, alpha: NodeId) -> Result<Vec<f64>> {
        let p = self
            .tree
            .parent(alpha)
            .ok_or_else(|| Error::InvalidTree("the root has no singular values".into()))?;
        let g = self.orthonormalized_at(p)?;
        let (m, rows, cols) = g.child_matricization(alpha);
        let mut s = linalg::singular_values(&m, rows, cols)?;
        s.resize(self.rank(alpha), 0.0);
        Ok(s)
    }

    /// Root-to-leaves sweep visiting every non-root node once with the
    /// center at its parent. `f` may truncate the child's rank by returning
    /// a projector `U_k` (r_a x k); returns the tensor left behind.
    fn sweep_children(&self, f: &mut dyn FnMut(NodeId, &[f64]) -> Option<usize>) -> Result<TreeTensor> {
        let mut g = self.orthonormalized_at(self.tree.root())?;
        let t = self.tree.clone();
        fn visit(
            g: &mut TreeTensor,
            t: &DimensionTree,
            p: NodeId,
            f: &mut dyn FnMut(NodeId, &[f64]) -> Option<usize>,
        ) -> Result<()> {
            for &a in t.children(p) {
                let (m, rows, cols) = g.child_matricization(a);
                let (u, s) = linalg::left_svd(&m, rows, cols)?;
                let mut s_pad = s.clone();
                s_pad.resize(rows, 0.0);
                if let Some(k) = f(a, &s_pad) {
                    let k = k.clamp(1, s.len());
                    if k < rows {
                        let kfull = s.len();
                        // U_k^T, k x r_a
                        let mut ut = vec![0.0; k * rows];
                        for i in 0..rows {
                            for j in 0..k {
                                ut[j * rows + i] = u[i * kfull + j];
                            }
                        }
                        let pos = t.child_position(a);
                        g.cores[p] = g.cores[p].mode_product(pos, &ut, k);
                        let ca = &g.cores[a];
                        let rows_a = ca.len() / rows;
                        let data = linalg::matmul_nt(&ca.data, &ut, rows_a, rows, k);
                        let mut shape = ca.shape.clone();
                        *shape.last_mut().unwrap() = k;
                        g.cores[a] = DenseTensor { shape, data };
                    }
                }
            }
            for &a in t.children(p) {
                if !t.is_leaf(a) {
                    g.move_down(a);
                    g.orthonormal_root = Some(a);
                    visit(g, t, a, f)?;
                    g.move_up(a);
                    g.orthonormal_root = Some(p);
                }
            }
            Ok(())
        }
        visit(&mut g, &t, t.root(), f)?;
        g.orthonormal_root = Some(t.root());
        Ok(g)
    }

    /// α-singular values of every non-root node (empty for the root).
    pub fn all_alpha_singular_values(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![]; self.tree.num_nodes()];
        self.sweep_children(&mut |a, s| {
            out[a] = s.to_vec();
            None
        })?;
        Ok(out)
    }

    /// Truncation with `‖g − result‖ ≤ tol ‖g‖`.
    pub fn truncate(&self, tol: f64) -> Result<TreeTensor> {
        if !(0.0..1.0).contains(&tol) {
            return Err(Error::InvalidTolerance(tol));
        }
        let k = (self.tree.num_nodes() - 1).max(1) as f64;
        let thr = tol * tol / k * self.norm().powi(2);
        let g = self.sweep_children(&mut |_, s| Some(linalg::rank_for_tail(s, thr)))?;
        g.make_admissible()
    }

    // Independent truncations can leave a rank above the product of its
    // neighbours; those ranks are redundant and are removed exactly.
    fn make_admissible(mut self) -> Result<TreeTensor> {
        loop {
            let r = self.ranks();
            let dims = self.leaf_dims();
            if self.tree.check_admissible(&r, &dims).is_ok() {
                return Ok(self);
            }
            let target = self.tree.clamp_admissible(&r, &dims);
            self = self.sweep_children(&mut |a, _| Some(target[a]))?;
        }
    }

    /// Truncation to ranks at most `ranks` (node-wise).
    pub fn truncate_to_ranks(&self, ranks: &[usize]) -> Result<TreeTensor> {
        if ranks.len() != self.tree.num_nodes() {
            return Err(Error::InvalidRanks("rank vector length".into()));
        }
        self.sweep_children(&mut |a, _| Some(ranks[a]))?.make_admissible()
    }

    // --- conversion from dense tensors --------------------------------------

    fn from_full_with(f: &FullTensor, tree: &DimensionTree, bases: Vec<Basis>, rule: &RankRule<'_>) -> Result<Self> {
        if f.shape.len() != tree.d() || f.shape.iter().zip(&bases).any(|(n, b)| *n != b.size()) {
            return Err(Error::ShapeMismatch("full tensor does not match the bases".into()));
        }
        if f.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite entry in full tensor".into()));
        }
        let labels: Vec<Label> = (0..tree.d()).map(Label::Leg).collect();
        let order: Vec<NodeId> = tree.post_order().into_iter().filter(|&a| a != tree.root()).collect();
        let children_of = |a: NodeId| -> Vec<Label> {
            if tree.is_leaf(a) {
                vec![Label::Leg(tree.leaf_dim(a))]
            } else {
                tree.children(a).iter().map(|&c| Label::Node(c)).collect()
            }
        };
        let root_labels: Vec<Label> = tree.children(tree.root()).iter().map(|&c| Label::Node(c)).collect();
        let (cores, mut root) = hosvd_split(f.clone(), labels, &order, &children_of, &root_labels, rule)?;
        root.shape.push(1);
        let mut all: Vec<Option<DenseTensor>> = vec![None; tree.num_nodes()];
        for (a, c) in cores {
            all[a] = Some(c);
        }
        all[tree.root()] = Some(root);
        let mut g = TreeTensor::new(tree.clone(), bases, all.into_iter().map(|c| c.unwrap()).collect())?;
        g.orthonormal_root = Some(tree.root());
        Ok(g)
    }

    /// Leaves-to-root truncated HOSVD with `‖g − F‖ ≤ tol ‖F‖`.
    pub fn from_full(f: &FullTensor, tree: &DimensionTree, bases: Vec<Basis>, tol: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tol) {
            return Err(Error::InvalidTolerance(tol));
        }
        let k = (tree.num_nodes() - 1).max(1) as f64;
        let thr = tol * tol / k * f.norm().powi(2);
        Self::from_full_with(f, tree, bases, &RankRule::Tail { threshold_sq: thr })
    }

    /// Leaves-to-root HOSVD with prescribed ranks.
    pub fn from_full_ranks(f: &FullTensor, tree: &DimensionTree, bases: Vec<Basis>, ranks: &[usize]) -> Result<Self> {
        tree.check_admissible(ranks, &bases.iter().map(|b| b.size()).collect::<Vec<_>>())?;
        Self::from_full_with(f, tree, bases, &RankRule::Fixed(ranks))
    }

    /// Nodes of the current tree, as a set, whose subsets appear in `family`.
    pub fn node_set(&self, family: &[DimSet]) -> HashSet<NodeId> {
        family.iter().filter_map(|s| self.tree.find(*s)).collect()
    }

    // --- serialization ------------------------------------------------------

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TensorJson::from_tensor(self, true)).expect("tensor serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<TensorJson>(s)?.into_tensor(None)
    }

    /// Binary layout: magic `TTN1`, little-endian u64 header length, the JSON
    /// header without core data, then all core entries as little-endian f64
    /// in node order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&TensorJson::from_tensor(self, false))?;
        w.write_all(b"TTN1")?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for c in &self.cores {
            for v in &c.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TTN1" {
            return Err(Error::Config("not a binary tree tensor file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let j: TensorJson = serde_json::from_slice(&header)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if rest.len() % 8 != 0 {
            return Err(Error::Config("truncated core data".into()));
        }
        let values: Vec<f64> = rest.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        j.into_tensor(Some(values))
    }
}

#[derive(Serialize, Deserialize)]
struct CoreJson {
    node: NodeId,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    tree: DimensionTree,
    bases: Vec<Basis>,
    cores: Vec<CoreJson>,
}

impl TensorJson {
    fn from_tensor(g: &TreeTensor, with_data: bool) -> Self {
        TensorJson {
            tree: g.tree.clone(),
            bases: g.bases.clone(),
            cores: g
                .cores
                .iter()
                .enumerate()
                .map(|(a, c)| CoreJson { node: a, shape: c.shape.clone(), data: with_data.then(|| c.data.clone()) })
                .collect(),
        }
    }

    fn into_tensor(self, flat: Option<Vec<f64>>) -> Result<TreeTensor> {
        let n = self.tree.num_nodes();
        let mut cores: Vec<Option<DenseTensor>> = vec![None; n];
        let mut offset = 0;
        let mut order: Vec<&CoreJson> = self.cores.iter().collect();
        order.sort_by_key(|c| c.node);
        for c in order {
            if c.node >= n || cores[c.node].is_some() {
                return Err(Error::Config(format!("bad core node id {}", c.node)));
            }
            let len: usize = c.shape.iter().product();
            let data = match (&flat, &c.data) {
                (Some(v), _) => {
                    if offset + len > v.len() {
                        return Err(Error::Config("truncated core data".into()));
                    }
                    offset += len;
                    v[offset - len..offset].to_vec()
                }
                (None, Some(d)) => d.clone(),
                (None, None) => return Err(Error::Config(format!("core {} has no data", c.node))),
            };
            cores[c.node] = Some(DenseTensor::new(c.shape.clone(), data)?);
        }
        let cores: Option<Vec<DenseTensor>> = cores.into_iter().collect();
        let cores = cores.ok_or_else(|| Error::Config("missing cores".into()))?;
        TreeTensor::new(self.tree, self.bases, cores)
    }
}

/// Number of singular values of the `alpha`-matricization of `f` above
/// `tol · σ_1`.
pub fn alpha_rank_of_full(f: &FullTensor, alpha: DimSet, tol: f64) -> Result<usize> {
    if f.len() > DEFAULT_FULL_CAP {
        return Err(Error::TooLarge { size: f.len(), cap: DEFAULT_FULL_CAP });
    }
    let rows: Vec<usize> = alpha.iter().collect();
    if rows.iter().any(|&r| r >= f.ndim()) {
        return Err(Error::ShapeMismatch("subset outside the tensor's dimensions".into()));
    }
    let (m, r, c) = f.matricize(&rows);
    let s = linalg::singular_values(&m, r, c)?;
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1 == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol * s1).count())
}
