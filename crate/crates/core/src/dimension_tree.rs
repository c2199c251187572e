//! Dimension partition trees over `{1, …, d}`.
//!
//! Dimensions are 0-based inside the crate and 1-based in JSON and display.
//! Node ids are positions in the node list and survive `swap_nodes`, so cores
//! keyed by id stay attached to the same node.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Rank per node id. The root entry is always 1.
pub type RankVector = Vec<usize>;

/// Subset of `{0, …, 63}` stored as a bitset.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct DimSet(pub u64);

impl DimSet {
    pub fn singleton(nu: usize) -> Self {
        DimSet(1u64 << nu)
    }

    pub fn full(d: usize) -> Self {
        if d == 64 {
            DimSet(u64::MAX)
        } else {
            DimSet((1u64 << d) - 1)
        }
    }

    pub fn from_dims(dims: &[usize]) -> Self {
        DimSet(dims.iter().fold(0u64, |acc, &v| acc | (1u64 << v)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, nu: usize) -> bool {
        self.0 >> nu & 1 == 1
    }

    pub fn is_subset(self, other: DimSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: DimSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: DimSet) -> DimSet {
        DimSet(self.0 | other.0)
    }

    /// Smallest element; panics on the empty set.
    pub fn min(self) -> usize {
        self.0.trailing_zeros() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(v)
            }
        })
    }

    /// 1-based element list.
    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Debug for DimSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub subset: DimSet,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Nested description used to build trees: a leaf holds a 0-based dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf(usize),
    Node(Vec<Shape>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeJson", into = "TreeJson")]
pub struct DimensionTree {
    d: usize,
    nodes: Vec<Node>,
    root: NodeId,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    subset: Vec<usize>,
    children: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    d: usize,
    nodes: Vec<NodeJson>,
    root: NodeId,
}

impl From<DimensionTree> for TreeJson {
    fn from(t: DimensionTree) -> Self {
        TreeJson {
            d: t.d,
            root: t.root,
            nodes: t
                .nodes
                .iter()
                .map(|n| NodeJson { subset: n.subset.to_one_based(), children: n.children.clone() })
                .collect(),
        }
    }
}

impl TryFrom<TreeJson> for DimensionTree {
    type Error = Error;

    fn try_from(j: TreeJson) -> Result<Self> {
        if j.d == 0 || j.d > 64 {
            return Err(Error::InvalidTree(format!("d = {} must be in 1..=64", j.d)));
        }
        let mut nodes = Vec::with_capacity(j.nodes.len());
        for n in &j.nodes {
            if n.subset.iter().any(|&v| v == 0 || v > j.d) {
                return Err(Error::InvalidTree(format!("subset {:?} outside 1..={}", n.subset, j.d)));
            }
            let dims: Vec<usize> = n.subset.iter().map(|v| v - 1).collect();
            nodes.push(Node { subset: DimSet::from_dims(&dims), parent: None, children: n.children.clone() });
        }
        for i in 0..nodes.len() {
            for c in nodes[i].children.clone() {
                if c >= nodes.len() {
                    return Err(Error::InvalidTree(format!("child id {c} out of range")));
                }
                if nodes[c].parent.is_some() {
                    return Err(Error::InvalidTree(format!("node {c} has two parents")));
                }
                nodes[c].parent = Some(i);
            }
        }
        let t = DimensionTree { d: j.d, nodes, root: j.root };
        t.validate()?;
        Ok(t)
    }
}

impl DimensionTree {
    /// Builds a tree from a nested shape, numbering nodes breadth-first with
    /// children in canonical order.
    pub fn from_shape(d: usize, shape: &Shape) -> Result<Self> {
        fn subset_of(s: &Shape) -> DimSet {
            match s {
                Shape::Leaf(v) => DimSet::singleton(*v),
                Shape::Node(ch) => ch.iter().fold(DimSet::default(), |a, c| a.union(subset_of(c))),
            }
        }
        if d == 0 || d > 64 {
            return Err(Error::InvalidTree(format!("d = {d} must be in 1..=64")));
        }
        let mut nodes: Vec<Node> = Vec::new();
        let mut queue: std::collections::VecDeque<(&Shape, Option<NodeId>)> = Default::default();
        queue.push_back((shape, None));
        while let Some((s, parent)) = queue.pop_front() {
            let id = nodes.len();
            nodes.push(Node { subset: subset_of(s), parent, children: vec![] });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            if let Shape::Node(ch) = s {
                let mut ch: Vec<&Shape> = ch.iter().collect();
                ch.sort_by_key(|c| subset_of(c).min());
                for c in ch {
                    queue.push_back((c, Some(id)));
                }
            }
        }
        if let Some(n) = nodes.iter().find(|n| n.subset.0 >> d != 0 && d < 64) {
            return Err(Error::InvalidTree(format!("subset {:?} exceeds d = {d}", n.subset)));
        }
        let t = DimensionTree { d, nodes, root: 0 };
        t.validate()?;
        Ok(t)
    }

    /// Linear tree with interior nodes `{order(1..k)}` for `k = d, …, 2`.
    /// `order` is a 1-based permutation.
    pub fn linear(d: usize, order: &[usize]) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidTree("linear tree needs d >= 2".into()));
        }
        let mut seen = vec![false; d];
        if order.len() != d {
            return Err(Error::InvalidOrder(format!("length {} != d = {d}", order.len())));
        }
        for &o in order {
            if o == 0 || o > d || seen[o - 1] {
                return Err(Error::InvalidOrder(format!("{order:?} is not a permutation of 1..={d}")));
            }
            seen[o - 1] = true;
        }
        let mut shape = Shape::Leaf(order[0] - 1);
        for &o in &order[1..] {
            shape = Shape::Node(vec![shape, Shape::Leaf(o - 1)]);
        }
        Self::from_shape(d, &shape)
    }

    /// Binary tree splitting each subset into a first half of size ⌈k/2⌉.
    pub fn balanced(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidTree("balanced tree needs d >= 2".into()));
        }
        fn build(lo: usize, hi: usize) -> Shape {
            if hi - lo == 1 {
                return Shape::Leaf(lo);
            }
            let mid = lo + (hi - lo).div_ceil(2);
            Shape::Node(vec![build(lo, mid), build(mid, hi)])
        }
        Self::from_shape(d, &build(0, d))
    }

    /// Random binary tree by agglomerative merging of random pairs.
    pub fn random_binary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidTree("random tree needs d >= 2".into()));
        }
        let mut pool: Vec<Shape> = (0..d).map(Shape::Leaf).collect();
        pool.shuffle(rng);
        while pool.len() > 1 {
            let i = rng.random_range(0..pool.len());
            let a = pool.swap_remove(i);
            let j = rng.random_range(0..pool.len());
            let b = pool.swap_remove(j);
            pool.push(Shape::Node(vec![a, b]));
        }
        Self::from_shape(d, &pool[0])
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidTree(m));
        if self.root >= self.nodes.len() {
            return err("root id out of range".into());
        }
        if self.nodes[self.root].subset != DimSet::full(self.d) {
            return err(format!("root subset {:?} is not the full set", self.nodes[self.root].subset));
        }
        if self.nodes[self.root].parent.is_some() {
            return err("root has a parent".into());
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(a) = stack.pop() {
            if reached[a] {
                return err(format!("node {a} reached twice"));
            }
            reached[a] = true;
            let n = &self.nodes[a];
            if n.subset.is_empty() {
                return err(format!("node {a} has an empty subset"));
            }
            if n.children.is_empty() {
                if n.subset.len() != 1 {
                    return err(format!("leaf {a} has non-singleton subset {:?}", n.subset));
                }
                continue;
            }
            if n.children.len() < 2 {
                return err(format!("internal node {a} has fewer than two children"));
            }
            let mut acc = DimSet::default();
            let mut last_min = None;
            for &c in &n.children {
                let cs = self.nodes[c].subset;
                if self.nodes[c].parent != Some(a) {
                    return err(format!("parent link of node {c} is inconsistent"));
                }
                if !acc.is_disjoint(cs) {
                    return err(format!("children of node {a} overlap"));
                }
                if let Some(m) = last_min {
                    if cs.min() <= m {
                        return err(format!("children of node {a} are not in canonical order"));
                    }
                }
                last_min = Some(cs.min());
                acc = acc.union(cs);
                stack.push(c);
            }
            if acc != n.subset {
                return err(format!("children of node {a} do not partition {:?}", n.subset));
            }
        }
        if reached.iter().any(|r| !r) {
            return err("unreachable nodes".into());
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, a: NodeId) -> &Node {
        &self.nodes[a]
    }

    pub fn subset(&self, a: NodeId) -> DimSet {
        self.nodes[a].subset
    }

    pub fn parent(&self, a: NodeId) -> Option<NodeId> {
        self.nodes[a].parent
    }

    pub fn children(&self, a: NodeId) -> &[NodeId] {
        &self.nodes[a].children
    }

    pub fn is_leaf(&self, a: NodeId) -> bool {
        self.nodes[a].children.is_empty()
    }

    fn check(&self, a: NodeId) -> Result<()> {
        if a < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::InvalidTree(format!("unknown node id {a}")))
        }
    }

    /// The leaf's dimension (0-based).
    pub fn leaf_dim(&self, a: NodeId) -> usize {
        self.nodes[a].subset.min()
    }

    /// Leaf node holding dimension `nu` (0-based).
    pub fn leaf_of_dim(&self, nu: usize) -> NodeId {
        self.leaves().into_iter().find(|&l| self.leaf_dim(l) == nu).expect("dimension in tree")
    }

    pub fn find(&self, subset: DimSet) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.subset == subset)
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&a| self.is_leaf(a)).collect()
    }

    pub fn internal(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&a| !self.is_leaf(a)).collect()
    }

    /// Strict ancestors, nearest first.
    pub fn ascendants(&self, a: NodeId) -> Result<Vec<NodeId>> {
        self.check(a)?;
        let mut out = vec![];
        let mut cur = self.nodes[a].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        Ok(out)
    }

    /// Strict descendants in pre-order.
    pub fn descendants(&self, a: NodeId) -> Result<Vec<NodeId>> {
        self.check(a)?;
        let mut out = vec![];
        let mut stack: Vec<NodeId> = self.nodes[a].children.iter().rev().copied().collect();
        while let Some(b) = stack.pop() {
            out.push(b);
            stack.extend(self.nodes[b].children.iter().rev());
        }
        Ok(out)
    }

    pub fn is_ascendant(&self, a: NodeId, of: NodeId) -> bool {
        a != of && self.nodes[of].subset.is_subset(self.nodes[a].subset)
    }

    pub fn level(&self, a: NodeId) -> usize {
        let mut l = 0;
        let mut cur = self.nodes[a].parent;
        while let Some(p) = cur {
            l += 1;
            cur = self.nodes[p].parent;
        }
        l
    }

    pub fn depth(&self) -> usize {
        (0..self.nodes.len()).map(|a| self.level(a)).max().unwrap_or(0)
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let target = self.nodes[a].subset.union(self.nodes[b].subset);
        let mut cur = a;
        while !target.is_subset(self.nodes[cur].subset) {
            cur = self.nodes[cur].parent.expect("root contains everything");
        }
        Ok(cur)
    }

    pub fn path_length(&self, a: NodeId, b: NodeId) -> Result<usize> {
        let q = self.lca(a, b)?;
        Ok(self.level(a) + self.level(b) - 2 * self.level(q))
    }

    /// Nodes with every child before its parent.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((a, done)) = stack.pop() {
            if done {
                out.push(a);
            } else {
                stack.push((a, true));
                for &c in self.nodes[a].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Nodes with every parent before its children.
    pub fn pre_order(&self) -> Vec<NodeId> {
        let mut out = vec![self.root];
        out.extend(self.descendants(self.root).unwrap());
        out
    }

    /// Position of `c` among the children of its parent.
    pub fn child_position(&self, c: NodeId) -> usize {
        let p = self.nodes[c].parent.expect("non-root node");
        self.nodes[p].children.iter().position(|&x| x == c).unwrap()
    }

    /// Swaps the subtrees rooted at `a` and `b`: afterwards `a` hangs where `b`
    /// was and vice versa. Ids are preserved; ancestor subsets are recomputed.
    pub fn swap_nodes(&self, a: NodeId, b: NodeId) -> Result<DimensionTree> {
        self.check(a)?;
        self.check(b)?;
        if a == b || !self.subset(a).is_disjoint(self.subset(b)) {
            return Err(Error::NoSwap(format!(
                "{:?} and {:?} are not disjoint",
                self.subset(a),
                self.subset(b)
            )));
        }
        let pa = self.nodes[a].parent.ok_or_else(|| Error::NoSwap("root cannot be swapped".into()))?;
        let pb = self.nodes[b].parent.ok_or_else(|| Error::NoSwap("root cannot be swapped".into()))?;
        if pa == pb {
            return Ok(self.clone());
        }
        let mut t = self.clone();
        for c in t.nodes[pa].children.iter_mut() {
            if *c == a {
                *c = b;
            }
        }
        for c in t.nodes[pb].children.iter_mut() {
            if *c == b {
                *c = a;
            }
        }
        t.nodes[a].parent = Some(pb);
        t.nodes[b].parent = Some(pa);
        for x in t.post_order() {
            if !t.nodes[x].children.is_empty() {
                let s = t.nodes[x].children.iter().fold(DimSet::default(), |acc, &c| acc.union(t.nodes[c].subset));
                t.nodes[x].subset = s;
            }
        }
        for x in 0..t.nodes.len() {
            let mut ch = std::mem::take(&mut t.nodes[x].children);
            ch.sort_by_key(|&c| t.nodes[c].subset.min());
            t.nodes[x].children = ch;
        }
        t.validate()?;
        Ok(t)
    }

    /// Checks `ranks` against the tree: root rank 1, leaf ranks bounded by the
    /// basis size, every rank bounded by the product of the ranks on the other
    /// side of each adjacent core.
    pub fn check_admissible(&self, ranks: &[usize], leaf_dims: &[usize]) -> Result<()> {
        let err = |m: String| Err(Error::InadmissibleRanks(m));
        if ranks.len() != self.nodes.len() {
            return Err(Error::InvalidRanks(format!("{} ranks for {} nodes", ranks.len(), self.nodes.len())));
        }
        if leaf_dims.len() != self.d {
            return Err(Error::InvalidRanks(format!("{} leaf sizes for d = {}", leaf_dims.len(), self.d)));
        }
        if ranks[self.root] != 1 {
            return err(format!("root rank is {}", ranks[self.root]));
        }
        for a in 0..self.nodes.len() {
            if ranks[a] == 0 {
                return err(format!("rank of {:?} is zero", self.subset(a)));
            }
            if self.is_leaf(a) {
                if ranks[a] > leaf_dims[self.leaf_dim(a)] {
                    return err(format!("leaf {:?} rank {} exceeds basis size", self.subset(a), ranks[a]));
                }
            } else {
                let prod: usize = self.children(a).iter().map(|&c| ranks[c]).product();
                if ranks[a] > prod {
                    return err(format!("rank of {:?} exceeds product of child ranks", self.subset(a)));
                }
            }
            if let Some(p) = self.parent(a) {
                let other: usize =
                    ranks[p] * self.children(p).iter().filter(|&&c| c != a).map(|&c| ranks[c]).product::<usize>();
                if ranks[a] > other {
                    return err(format!("rank of {:?} exceeds the complementary matricization size", self.subset(a)));
                }
            }
        }
        Ok(())
    }

    /// Largest ranks not above `ranks` that pass [`check_admissible`](Self::check_admissible).
    pub fn clamp_admissible(&self, ranks: &[usize], leaf_dims: &[usize]) -> Vec<usize> {
        let mut r = ranks.to_vec();
        r[self.root] = 1;
        loop {
            let mut changed = false;
            for a in 0..self.nodes.len() {
                let mut bound = if self.is_leaf(a) {
                    leaf_dims[self.leaf_dim(a)]
                } else {
                    self.children(a).iter().map(|&c| r[c]).product()
                };
                if let Some(p) = self.parent(a) {
                    bound = bound
                        .min(r[p] * self.children(p).iter().filter(|&&c| c != a).map(|&c| r[c]).product::<usize>());
                }
                let bound = bound.max(1);
                if r[a] > bound {
                    r[a] = bound;
                    changed = true;
                }
            }
            if !changed {
                return r;
            }
        }
    }

    /// `Σ_internal r_α ∏_children r_β + Σ_leaf N_α r_α`.
    pub fn storage_complexity(&self, ranks: &[usize], leaf_dims: &[usize]) -> Result<usize> {
        if ranks.len() != self.nodes.len() {
            return Err(Error::InvalidRanks(format!("{} ranks for {} nodes", ranks.len(), self.nodes.len())));
        }
        if leaf_dims.len() != self.d {
            return Err(Error::InvalidRanks(format!("{} leaf sizes for d = {}", leaf_dims.len(), self.d)));
        }
        Ok((0..self.nodes.len())
            .map(|a| {
                if self.is_leaf(a) {
                    leaf_dims[self.leaf_dim(a)] * ranks[a]
                } else {
                    ranks[a] * self.children(a).iter().map(|&c| ranks[c]).product::<usize>()
                }
            })
            .sum())
    }

    /// Set of node subsets, handy for comparing trees regardless of ids.
    pub fn subset_family(&self) -> Vec<DimSet> {
        let mut v: Vec<DimSet> = self.nodes.iter().map(|n| n.subset).collect();
        v.sort();
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl fmt::Display for DimensionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn rec(t: &DimensionTree, a: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if t.is_leaf(a) {
                return write!(f, "{}", t.leaf_dim(a) + 1);
            }
            write!(f, "(")?;
            for (i, &c) in t.children(a).iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                rec(t, c, f)?;
            }
            write!(f, ")")
        }
        rec(self, self.root, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(v: &[usize]) -> DimSet {
        DimSet::from_dims(&v.iter().map(|x| x - 1).collect::<Vec<_>>())
    }

    #[test]
    fn linear_d3_node_order() {
        let t = DimensionTree::linear(3, &[1, 2, 3]).unwrap();
        let subsets: Vec<DimSet> = (0..t.num_nodes()).map(|a| t.subset(a)).collect();
        assert_eq!(subsets, vec![set(&[1, 2, 3]), set(&[1, 2]), set(&[3]), set(&[1]), set(&[2])]);
    }

    #[test]
    fn linear_rejects_bad_order() {
        assert!(DimensionTree::linear(3, &[1, 1, 3]).is_err());
        assert!(DimensionTree::linear(3, &[1, 2]).is_err());
        assert!(DimensionTree::linear(3, &[0, 1, 2]).is_err());
    }

    #[test]
    fn balanced_shapes() {
        let t = DimensionTree::balanced(4).unwrap();
        let internal: Vec<DimSet> = t.internal().iter().map(|&a| t.subset(a)).collect();
        assert_eq!(internal, vec![set(&[1, 2, 3, 4]), set(&[1, 2]), set(&[3, 4])]);
        let t8 = DimensionTree::balanced(8).unwrap();
        assert_eq!(t8.num_nodes(), 15);
        assert_eq!(t8.depth(), 3);
        let t3 = DimensionTree::balanced(3).unwrap();
        let ch: Vec<DimSet> = t3.children(t3.root()).iter().map(|&c| t3.subset(c)).collect();
        assert_eq!(ch, vec![set(&[1, 2]), set(&[3])]);
    }

    #[test]
    fn random_trees_are_deterministic() {
        let a = DimensionTree::random_binary(10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = DimensionTree::random_binary(10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_nodes(), 19);
        let two = DimensionTree::random_binary(2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(two.num_nodes(), 3);
    }

    #[test]
    fn storage_small() {
        let t = DimensionTree::linear(2, &[1, 2]).unwrap();
        assert_eq!(t.storage_complexity(&[1, 1, 1], &[5, 5]).unwrap(), 11);
        assert!(t.storage_complexity(&[1, 1], &[5, 5]).is_err());
    }

    #[test]
    fn queries() {
        let t = DimensionTree::linear(8, &[1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let l1 = t.find(set(&[1])).unwrap();
        let l2 = t.find(set(&[2])).unwrap();
        assert_eq!(t.subset(t.lca(l1, l2).unwrap()), set(&[1, 2]));
        assert_eq!(t.path_length(l1, l1).unwrap(), 0);
        assert_eq!(t.path_length(l1, l2).unwrap(), 2);
        assert_eq!(t.descendants(t.root()).unwrap().len(), t.num_nodes() - 1);
        assert!(t.lca(99, 0).is_err());
    }

    #[test]
    fn swap_builds_expected_nodes() {
        // ((1 2) 3) 4 style tree with {1,2} swapped against {4}
        let t = DimensionTree::linear(4, &[1, 2, 3, 4]).unwrap();
        let a = t.find(set(&[1, 2])).unwrap();
        let b = t.find(set(&[4])).unwrap();
        let s = t.swap_nodes(a, b).unwrap();
        assert!(s.find(set(&[3, 4])).is_some());
        assert!(s.find(set(&[1, 2])).is_some());
        assert!(s.find(set(&[1, 2, 3])).is_none());
        // back again restores the family
        let back = s.swap_nodes(a, b).unwrap();
        assert_eq!(back.subset_family(), t.subset_family());
        // descendant pairs are rejected
        let l1 = t.find(set(&[1])).unwrap();
        assert!(t.swap_nodes(a, l1).is_err());
        // siblings swap to the same tree
        let l2 = t.find(set(&[2])).unwrap();
        assert_eq!(t.swap_nodes(l1, l2).unwrap(), t);
    }

    #[test]
    fn json_round_trip() {
        let t = DimensionTree::random_binary(6, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s = t.to_json();
        assert_eq!(DimensionTree::from_json(&s).unwrap(), t);
        let bad = r#"{"d":2,"nodes":[{"subset":[1,2],"children":[1]},{"subset":[1],"children":[]}],"root":0}"#;
        assert!(DimensionTree::from_json(bad).is_err());
    }
}
