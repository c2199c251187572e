#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treedens::learner::{self, LearnerConfig};
use treedens::linalg;
use treedens::tree_tensor::{alpha_rank_of_full, FullTensor};
use treedens::{Basis, DimSet, DimensionTree, SampleSet, TreeTensor};

pub fn random_sizes(d: usize, lo: usize, hi: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..d).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Ranks min(#inside, #outside, cap) at every non-root node.
pub fn capped_ranks(tree: &DimensionTree, sizes: &[usize], cap: usize) -> Vec<usize> {
    let total: usize = sizes.iter().product();
    (0..tree.num_nodes())
        .map(|a| {
            if a == tree.root() {
                return 1;
            }
            let inside: usize = tree.subset(a).iter().map(|nu| sizes[nu]).product();
            inside.min(total / inside).min(cap)
        })
        .collect()
}

pub fn random_model(d: usize, sizes: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> TreeTensor {
    let tree = DimensionTree::random_binary(d, rng).unwrap();
    let bases: Vec<Basis> = sizes.iter().map(|&k| Basis::canonical(k)).collect();
    let ranks = capped_ranks(&tree, sizes, cap);
    TreeTensor::random(tree, bases, &ranks, rng).unwrap()
}

pub fn random_discrete(n: usize, sizes: &[usize], rng: &mut ChaCha8Rng) -> SampleSet {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| sizes.iter().map(|&k| rng.random_range(0..k) as f64).collect()).collect();
    SampleSet::from_rows(&rows).unwrap()
}

pub fn frequency_table(s: &SampleSet, sizes: &[usize]) -> Vec<f64> {
    let mut f = vec![0.0; sizes.iter().product()];
    for i in 0..s.n() {
        let mut idx = 0;
        for (nu, &k) in sizes.iter().enumerate() {
            idx = idx * k + s.point(i)[nu] as usize;
        }
        f[idx] += 1.0 / s.n() as f64;
    }
    f
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fits a canonical-basis model at full ranks and returns the largest
/// deviation from the empirical frequency table.
pub fn frequency_table_error(rng: &mut ChaCha8Rng) -> f64 {
    let d = rng.random_range(2..=4);
    let sizes = random_sizes(d, 2, 3, rng);
    let n = rng.random_range(5..=60);
    let s = random_discrete(n, &sizes, rng);
    let tree = DimensionTree::random_binary(d, rng).unwrap();
    let bases: Vec<Basis> = sizes.iter().map(|&k| Basis::canonical(k)).collect();
    let ranks = capped_ranks(&tree, &sizes, usize::MAX);
    let cfg = LearnerConfig { max_sweeps: 30, stagnation_tol: 0.0, ..Default::default() };
    let fit = learner::fit_fixed(&tree, &ranks, &bases, &s, &cfg).unwrap();
    let full = fit.model.full_tensor().unwrap();
    max_diff(&full.data, &frequency_table(&s, &sizes))
}

/// Largest deviation between the tree singular values and a dense SVD of
/// every matricization, over one random model with d ≤ 4.
pub fn singular_value_error(rng: &mut ChaCha8Rng) -> f64 {
    let d = rng.random_range(2..=4);
    let sizes = random_sizes(d, 2, 4, rng);
    let cap = rng.random_range(1..=4);
    let g = random_model(d, &sizes, cap, rng);
    let f = g.full_tensor().unwrap();
    let mut worst: f64 = 0.0;
    for a in 0..g.tree.num_nodes() {
        if a == g.tree.root() {
            continue;
        }
        let rows: Vec<usize> = g.tree.subset(a).iter().collect();
        let (m, r, c) = f.matricize(&rows);
        let mut dense = linalg::singular_values(&m, r, c).unwrap();
        let s = g.alpha_singular_values(a).unwrap();
        dense.resize(s.len().max(dense.len()), 0.0);
        let mut s2 = s.clone();
        s2.resize(dense.len(), 0.0);
        worst = worst.max(max_diff(&s2, &dense));
    }
    worst
}

fn rank(f: &FullTensor, alpha: DimSet) -> usize {
    alpha_rank_of_full(f, alpha, 1e-10).unwrap()
}

/// Random nonempty proper subset of {0..d}.
fn random_subset(d: usize, rng: &mut ChaCha8Rng) -> DimSet {
    loop {
        let dims: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.5)).collect();
        if !dims.is_empty() && dims.len() < d {
            return DimSet::from_dims(&dims);
        }
    }
}

/// Checks the union bound and the sum/product bounds on α-ranks for one
/// random pair of low-rank functions. Returns a description of the first
/// violation.
pub fn rank_inequalities(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let d = rng.random_range(3..=4);
    let sizes = random_sizes(d, 2, 3, rng);
    let g = random_model(d, &sizes, rng.random_range(1..=2), rng).full_tensor().unwrap();
    let h = random_model(d, &sizes, rng.random_range(1..=2), rng).full_tensor().unwrap();
    let sum = FullTensor::new(g.shape.clone(), g.data.iter().zip(&h.data).map(|(a, b)| a + b).collect()).unwrap();
    let prod = FullTensor::new(g.shape.clone(), g.data.iter().zip(&h.data).map(|(a, b)| a * b).collect()).unwrap();

    let alpha = random_subset(d, rng);
    // random partition of alpha into disjoint blocks
    let dims: Vec<usize> = alpha.iter().collect();
    let blocks = rng.random_range(1..=dims.len());
    let mut parts = vec![Vec::new(); blocks];
    for (i, &nu) in dims.iter().enumerate() {
        let b = if i < blocks { i } else { rng.random_range(0..blocks) };
        parts[b].push(nu);
    }
    let bound: usize = parts.iter().map(|p| rank(&g, DimSet::from_dims(p))).product();
    let ra = rank(&g, alpha);
    if ra > bound {
        return Err(format!("union: rank {ra} > {bound} for {alpha:?} split {parts:?}"));
    }
    let (rg, rh) = (rank(&g, alpha), rank(&h, alpha));
    let rs = rank(&sum, alpha);
    if rs > rg + rh {
        return Err(format!("sum: {rs} > {rg} + {rh}"));
    }
    let rp = rank(&prod, alpha);
    if rp > rg * rh {
        return Err(format!("product: {rp} > {rg} * {rh}"));
    }
    Ok(())
}

pub fn brute_force_loo(pattern: &[usize], psi: &[f64], n: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let mut c = vec![0.0; k];
        for l in 0..n {
            if l != i {
                for &j in pattern {
                    c[j] += psi[l * k + j] / (n - 1) as f64;
                }
            }
        }
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        let val: f64 = pattern.iter().map(|&j| c[j] * psi[i * k + j]).sum();
        total += norm2 - 2.0 * val;
    }
    total / n as f64
}

/// (closed form vs brute force, closed form vs pairwise form) on one random
/// instance with n ≤ 30 and at most 40 coefficients.
pub fn loo_errors(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = rng.random_range(2..=30);
    let k = rng.random_range(1..=40);
    let psi: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pattern: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
    let a = learner::loo_risk(&pattern, &psi, n, k).unwrap();
    let b = brute_force_loo(&pattern, &psi, n, k);
    let c = learner::loo_risk_pairwise(&pattern, &psi, n, k).unwrap();
    ((a - b).abs(), (a - c).abs())
}
