//! Benchmark distributions with exact samplers and density oracles.

use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bases::Basis;
use crate::error::{Error, Result};
use crate::linalg;
use crate::samples::SampleSet;
use crate::tensor::{DenseTensor, DEFAULT_FULL_CAP};
use crate::tree_tensor::FullTensor;

/// Covariance with two independent groups `{1,3,4,6}` and `{2,5}`.
pub fn group_independent_covariance() -> Vec<f64> {
    vec![
        2.0, 0.0, 0.5, 1.0, 0.0, 0.5, //
        0.0, 1.0, 0.0, 0.0, 0.5, 0.0, //
        0.5, 0.0, 2.0, 0.0, 0.0, 1.0, //
        1.0, 0.0, 0.0, 3.0, 0.0, 0.0, //
        0.0, 0.5, 0.0, 0.0, 1.0, 0.0, //
        0.5, 0.0, 1.0, 0.0, 0.0, 2.0,
    ]
}

/// Covariance that becomes tridiagonal after reordering the variables as
/// `(4, 6, 3, 5, 1, 2)`.
pub fn band_diagonal_covariance() -> Vec<f64> {
    vec![
        2.0, 0.2, 0.0, 0.0, 0.25, 0.0, //
        0.2, 2.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 2.0, 0.0, 1.0 / 3.0, 0.5, //
        0.0, 0.0, 0.0, 2.0, 0.0, 1.0, //
        0.25, 0.0, 1.0 / 3.0, 0.0, 2.0, 0.0, //
        0.0, 0.0, 0.5, 1.0, 0.0, 2.0,
    ]
}

/// Both preset covariances (6 x 6, row-major).
pub fn preset_covariances() -> (Vec<f64>, Vec<f64>) {
    (group_independent_covariance(), band_diagonal_covariance())
}

/// Gaussian restricted to the box `×[-5σ_ν, 5σ_ν]`, normalized with the
/// untruncated constant.
#[derive(Debug, Clone)]
pub struct TruncatedGaussian {
    d: usize,
    cov: Vec<f64>,
    chol: Vec<f64>,
    half_width: Vec<f64>,
    log_norm: f64,
}

impl TruncatedGaussian {
    pub fn new(cov: Vec<f64>, d: usize) -> Result<Self> {
        if cov.len() != d * d || d == 0 {
            return Err(Error::InvalidDistribution("covariance must be d x d".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 {
                    return Err(Error::InvalidDistribution("covariance is not symmetric".into()));
                }
            }
        }
        let chol = linalg::cholesky(&cov, d)?;
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        let log_norm = -0.5 * (d as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        let half_width = (0..d).map(|i| 5.0 * cov[i * d + i].sqrt()).collect();
        Ok(Self { d, cov, chol, half_width, log_norm })
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn box_half_widths(&self) -> &[f64] {
        &self.half_width
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.half_width).all(|(v, h)| v.abs() <= *h)
    }

    fn density(&self, x: &[f64]) -> f64 {
        if !self.inside(x) {
            return 0.0;
        }
        // solve L y = x, quadratic form = |y|^2
        let d = self.d;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|j| self.chol[i * d + j] * y[j]).sum();
            y[i] = (x[i] - s) / self.chol[i * d + i];
        }
        let q: f64 = y.iter().map(|v| v * v).sum();
        (self.log_norm - 0.5 * q).exp()
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.d;
        let mut z = vec![0.0; d];
        loop {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for i in 0..d {
                out[i] = (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum();
            }
            if self.inside(out) {
                return;
            }
        }
    }
}

/// Discrete Markov chain on `{1..N}^d` with initial law and one transition
/// matrix per step.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    d: usize,
    n_states: usize,
    init: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    samplers: Vec<Vec<WeightedIndex<f64>>>,
    init_sampler: WeightedIndex<f64>,
}

impl MarkovChain {
    pub fn new(init: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Self> {
        let n = init.len();
        let d = transitions.len() + 1;
        if n == 0 || d < 2 {
            return Err(Error::InvalidDistribution("need at least two variables and one state".into()));
        }
        check_probability(&init, "initial law")?;
        let mut samplers = Vec::with_capacity(transitions.len());
        for p in &transitions {
            if p.len() != n * n {
                return Err(Error::InvalidDistribution("transition matrix must be N x N".into()));
            }
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let row = &p[i * n..(i + 1) * n];
                check_probability(row, "transition row")?;
                rows.push(WeightedIndex::new(row).map_err(|e| Error::InvalidDistribution(e.to_string()))?);
            }
            samplers.push(rows);
        }
        let init_sampler = WeightedIndex::new(&init).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(Self { d, n_states: n, init, transitions, samplers, init_sampler })
    }

    /// Uniform initial law and independent random rank-2 transitions per step.
    pub fn random_per_step<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Self> {
        let t = (0..d - 1).map(|_| make_rank2_stochastic(n, rng)).collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0 / n as f64; n], t)
    }

    /// Uniform initial law and one random rank-2 transition shared by all steps.
    pub fn random_shared<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Self> {
        let p = make_rank2_stochastic(n, rng)?;
        Self::new(vec![1.0 / n as f64; n], vec![p; d - 1])
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    fn density(&self, x: &[f64]) -> f64 {
        let n = self.n_states;
        let Some(idx) = discrete_index(x, n) else { return 0.0 };
        let mut p = self.init[idx[0]];
        for (k, t) in self.transitions.iter().enumerate() {
            p *= t[idx[k] * n + idx[k + 1]];
        }
        p
    }
}

fn check_probability(p: &[f64], what: &str) -> Result<()> {
    let s: f64 = p.iter().sum();
    if p.iter().any(|v| *v < 0.0 || !v.is_finite()) || (s - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!("{what} is not a probability vector")));
    }
    Ok(())
}

fn discrete_index(x: &[f64], n: usize) -> Option<Vec<usize>> {
    x.iter()
        .map(|&v| {
            let r = v.round();
            ((v - r).abs() < 1e-9 && r >= 0.0 && r < n as f64).then_some(r as usize)
        })
        .collect()
}

fn random_probability<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Row-stochastic `N x N` matrix of rank 2 with rows `w_i q1 + (1 - w_i) q2`.
pub fn make_rank2_stochastic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidDistribution("rank-2 stochastic matrices need N >= 3".into()));
    }
    for _ in 0..100 {
        let q1 = random_probability(n, rng);
        let q2 = random_probability(n, rng);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut p = Vec::with_capacity(n * n);
        for wi in &w {
            for j in 0..n {
                p.push(wi * q1[j] + (1.0 - wi) * q2[j]);
            }
        }
        let s = linalg::singular_values(&p, n, n)?;
        if s[1] / s[0] > 1e-3 && s[2] / s[0] <= 1e-12 {
            return Ok(p);
        }
    }
    Err(Error::Numerical("could not draw a rank-2 stochastic matrix".into()))
}

/// Sum of `rank` random positive elementary tensors, every matricization of
/// which has numerical rank exactly `rank`.
pub fn make_rank3_clique_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<DenseTensor> {
    make_low_rank_clique_tensor(shape, 3, rng)
}

pub fn make_low_rank_clique_tensor<R: Rng + ?Sized>(shape: &[usize], rank: usize, rng: &mut R) -> Result<DenseTensor> {
    if shape.iter().any(|&n| n < rank) {
        return Err(Error::InvalidDistribution(format!("clique dims must be >= {rank}")));
    }
    for _ in 0..100 {
        let mut t = DenseTensor::zeros(shape.to_vec());
        for _ in 0..rank {
            let factors: Vec<Vec<f64>> =
                shape.iter().map(|&n| (0..n).map(|_| rng.random::<f64>() + 0.05).collect()).collect();
            let mut idx = vec![0usize; shape.len()];
            for v in t.data.iter_mut() {
                *v += idx.iter().zip(&factors).map(|(&i, f)| f[i]).product::<f64>();
                for a in (0..shape.len()).rev() {
                    idx[a] += 1;
                    if idx[a] < shape[a] {
                        break;
                    }
                    idx[a] = 0;
                }
            }
        }
        if matricization_ranks_ok(&t, rank)? {
            return Ok(t);
        }
    }
    Err(Error::Numerical("could not draw a clique tensor of the requested rank".into()))
}

fn matricization_ranks_ok(t: &DenseTensor, rank: usize) -> Result<bool> {
    let k = t.ndim();
    for mask in 1u32..(1 << k) - 1 {
        if mask & 1 == 0 {
            continue; // complements give the same ranks
        }
        let rows: Vec<usize> = (0..k).filter(|a| mask >> a & 1 == 1).collect();
        let (m, r, c) = t.matricize(&rows);
        let s = linalg::singular_values(&m, r, c)?;
        let ok_low = s.get(rank - 1).is_some_and(|v| v / s[0] > 1e-8);
        let ok_high = s.get(rank).is_none_or(|v| v / s[0] <= 1e-12);
        if !(ok_low && ok_high) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Clique tensor with i.i.d. uniform positive entries (generically full rank).
pub fn make_generic_clique_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.random::<f64>() + 0.05).collect() }
}

/// Cliques of the ten-variable benchmark model (0-based).
pub fn example_cliques() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2, 6], vec![2, 3, 4, 5], vec![3, 7], vec![7, 8, 9]]
}

/// Discrete model `f ∝ ∏_β g_β(x_β)` with its materialized joint table.
#[derive(Debug)]
pub struct GraphicalModel {
    d: usize,
    n_states: usize,
    cliques: Vec<(Vec<usize>, DenseTensor)>,
    table: Vec<f64>,
    alias: OnceLock<WeightedAliasIndex<f64>>,
}

impl Clone for GraphicalModel {
    fn clone(&self) -> Self {
        Self {
            d: self.d,
            n_states: self.n_states,
            cliques: self.cliques.clone(),
            table: self.table.clone(),
            alias: OnceLock::new(),
        }
    }
}

impl GraphicalModel {
    pub fn new(d: usize, n_states: usize, cliques: Vec<(Vec<usize>, DenseTensor)>) -> Result<Self> {
        let size = (n_states as u128).pow(d as u32);
        if size > DEFAULT_FULL_CAP as u128 {
            return Err(Error::TooLarge { size: size as usize, cap: DEFAULT_FULL_CAP });
        }
        for (vars, t) in &cliques {
            if vars.iter().any(|&v| v >= d) || t.shape != vec![n_states; vars.len()] {
                return Err(Error::InvalidDistribution("clique does not match the model".into()));
            }
            if t.data.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidDistribution("clique tensors must be nonnegative".into()));
            }
        }
        let size = size as usize;
        let mut table = vec![1.0; size];
        let strides = crate::tensor::strides(&vec![n_states; d]);
        for (vars, t) in &cliques {
            let cst = crate::tensor::strides(&t.shape);
            for (flat, v) in table.iter_mut().enumerate() {
                let mut off = 0;
                for (k, &var) in vars.iter().enumerate() {
                    off += (flat / strides[var] % n_states) * cst[k];
                }
                *v *= t.data[off];
            }
        }
        let total: f64 = table.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("joint table has zero mass".into()));
        }
        for v in table.iter_mut() {
            *v /= total;
        }
        Ok(Self { d, n_states, cliques, table, alias: OnceLock::new() })
    }

    /// Random model on the given cliques; `clique_rank = None` draws generic
    /// (full-rank) clique tensors.
    pub fn random<R: Rng + ?Sized>(
        d: usize,
        n_states: usize,
        cliques: &[Vec<usize>],
        clique_rank: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(cliques.len());
        for c in cliques {
            let shape = vec![n_states; c.len()];
            let t = match clique_rank {
                Some(r) => make_low_rank_clique_tensor(&shape, r, rng)?,
                None => make_generic_clique_tensor(&shape, rng),
            };
            out.push((c.clone(), t));
        }
        Self::new(d, n_states, out)
    }

    pub fn cliques(&self) -> &[(Vec<usize>, DenseTensor)] {
        &self.cliques
    }

    fn alias(&self) -> &WeightedAliasIndex<f64> {
        self.alias.get_or_init(|| WeightedAliasIndex::new(self.table.clone()).expect("valid joint table"))
    }

    fn density(&self, x: &[f64]) -> f64 {
        let Some(idx) = discrete_index(x, self.n_states) else { return 0.0 };
        self.table[idx.iter().fold(0, |acc, &i| acc * self.n_states + i)]
    }
}

/// Mixture of products of categorical laws on `{1..N_ν}`.
#[derive(Debug, Clone)]
pub struct ProductMixture {
    weights: Vec<f64>,
    /// `components[k][ν]` is the law of `x_ν` in component `k`.
    components: Vec<Vec<Vec<f64>>>,
    dims: Vec<usize>,
    selector: WeightedIndex<f64>,
}

impl ProductMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidDistribution("one weight per component".into()));
        }
        check_probability(&weights, "mixture weights")?;
        let dims: Vec<usize> = components[0].iter().map(|p| p.len()).collect();
        for c in &components {
            if c.iter().map(|p| p.len()).collect::<Vec<_>>() != dims {
                return Err(Error::InvalidDistribution("components disagree on dimensions".into()));
            }
            for p in c {
                check_probability(p, "component factor")?;
            }
        }
        let selector = WeightedIndex::new(&weights).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(Self { weights, components, dims, selector })
    }

    pub fn random<R: Rng + ?Sized>(m: usize, dims: &[usize], rng: &mut R) -> Result<Self> {
        let weights = random_probability(m, rng);
        let components = (0..m).map(|_| dims.iter().map(|&n| random_probability(n, rng)).collect()).collect();
        Self::new(weights, components)
    }

    fn density(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            let mut p = *w;
            for (nu, law) in c.iter().enumerate() {
                let Some(i) = discrete_index(&x[nu..nu + 1], law.len()) else { return 0.0 };
                p *= law[i[0]];
            }
            total += p;
        }
        total
    }
}

#[derive(Debug, Clone)]
pub enum BenchmarkDistribution {
    TruncatedGaussian(TruncatedGaussian),
    MarkovChain(MarkovChain),
    GraphicalModel(GraphicalModel),
    ProductMixture(ProductMixture),
}

impl BenchmarkDistribution {
    pub fn d(&self) -> usize {
        match self {
            Self::TruncatedGaussian(g) => g.d,
            Self::MarkovChain(m) => m.d,
            Self::GraphicalModel(g) => g.d,
            Self::ProductMixture(p) => p.dims.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Self::TruncatedGaussian(_))
    }

    /// State counts per dimension for discrete kinds.
    pub fn state_counts(&self) -> Option<Vec<usize>> {
        match self {
            Self::TruncatedGaussian(_) => None,
            Self::MarkovChain(m) => Some(vec![m.n_states; m.d]),
            Self::GraphicalModel(g) => Some(vec![g.n_states; g.d]),
            Self::ProductMixture(p) => Some(p.dims.clone()),
        }
    }

    /// Bases used to learn this distribution: indicators for discrete kinds,
    /// Legendre polynomials of degree `max_degree` on the box otherwise.
    pub fn natural_bases(&self, max_degree: usize) -> Vec<Basis> {
        match self {
            Self::TruncatedGaussian(g) => g.half_width.iter().map(|&h| Basis::legendre(-h, h, max_degree)).collect(),
            _ => self.state_counts().unwrap().into_iter().map(Basis::canonical).collect(),
        }
    }

    /// Density with respect to Lebesgue measure on the box or counting
    /// measure on the grid; 0 outside the support.
    pub fn density(&self, x: &[f64]) -> f64 {
        if x.len() != self.d() {
            return 0.0;
        }
        match self {
            Self::TruncatedGaussian(g) => g.density(x),
            Self::MarkovChain(m) => m.density(x),
            Self::GraphicalModel(g) => g.density(x),
            Self::ProductMixture(p) => p.density(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let d = self.d();
        let mut pts = vec![0.0; n * d];
        match self {
            Self::TruncatedGaussian(g) => {
                for row in pts.chunks_mut(d) {
                    g.sample_one(rng, row);
                }
            }
            Self::MarkovChain(m) => {
                for row in pts.chunks_mut(d) {
                    let mut s = m.init_sampler.sample(rng);
                    row[0] = s as f64;
                    for k in 1..d {
                        s = m.samplers[k - 1][s].sample(rng);
                        row[k] = s as f64;
                    }
                }
            }
            Self::GraphicalModel(g) => {
                let alias = g.alias();
                for row in pts.chunks_mut(d) {
                    let mut flat = alias.sample(rng);
                    for k in (0..d).rev() {
                        row[k] = (flat % g.n_states) as f64;
                        flat /= g.n_states;
                    }
                }
            }
            Self::ProductMixture(p) => {
                let samplers: Vec<Vec<WeightedIndex<f64>>> = p
                    .components
                    .iter()
                    .map(|c| c.iter().map(|law| WeightedIndex::new(law).unwrap()).collect())
                    .collect();
                for row in pts.chunks_mut(d) {
                    let k = p.selector.sample(rng);
                    for (nu, s) in samplers[k].iter().enumerate() {
                        row[nu] = s.sample(rng) as f64;
                    }
                }
            }
        }
        SampleSet::new(d, pts)
    }

    /// Probability table of a discrete kind.
    pub fn exact_tensor(&self) -> Result<FullTensor> {
        let dims = self
            .state_counts()
            .ok_or_else(|| Error::InvalidDistribution("continuous distributions have no table".into()))?;
        let size = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
        if size > DEFAULT_FULL_CAP {
            return Err(Error::TooLarge { size, cap: DEFAULT_FULL_CAP });
        }
        if let Self::GraphicalModel(g) = self {
            return DenseTensor::new(dims, g.table.clone());
        }
        let mut data = Vec::with_capacity(size);
        let mut idx = vec![0usize; dims.len()];
        let mut x = vec![0.0; dims.len()];
        for _ in 0..size {
            for (xv, &i) in x.iter_mut().zip(&idx) {
                *xv = i as f64;
            }
            data.push(self.density(&x));
            for a in (0..dims.len()).rev() {
                idx[a] += 1;
                if idx[a] < dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        DenseTensor::new(dims, data)
    }

    /// Draws from the reference measure normalized to a probability: uniform
    /// on the box or on the grid.
    pub fn sample_reference<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        let d = self.d();
        let mut pts = vec![0.0; n * d];
        match self {
            Self::TruncatedGaussian(g) => {
                for row in pts.chunks_mut(d) {
                    for (v, h) in row.iter_mut().zip(&g.half_width) {
                        *v = rng.random_range(-*h..=*h);
                    }
                }
            }
            _ => {
                let dims = self.state_counts().unwrap();
                for row in pts.chunks_mut(d) {
                    for (v, &n) in row.iter_mut().zip(&dims) {
                        *v = rng.random_range(0..n) as f64;
                    }
                }
            }
        }
        SampleSet::new(d, pts)
    }
}

/// JSON description of a distribution, either a named preset or explicit
/// parameters. Random constructions are seeded by `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionSpec {
    Preset {
        preset: String,
        #[serde(default)]
        seed: u64,
    },
    Explicit(ExplicitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplicitSpec {
    TruncatedGaussian {
        covariance: Vec<Vec<f64>>,
    },
    MarkovChain {
        d: usize,
        n_states: usize,
        /// Explicit transition matrices (rows of rows); random rank-2 if absent.
        #[serde(default)]
        transitions: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        initial: Option<Vec<f64>>,
        #[serde(default = "default_true")]
        shared: bool,
        #[serde(default)]
        seed: u64,
    },
    GraphicalModel {
        d: usize,
        n_states: usize,
        /// 1-based variable lists.
        cliques: Vec<Vec<usize>>,
        /// Rank of every clique matricization; generic full-rank if absent.
        #[serde(default)]
        clique_rank: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    ProductMixture {
        weights: Vec<f64>,
        components: Vec<Vec<Vec<f64>>>,
    },
}

fn default_true() -> bool {
    true
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 6] = ["table1", "table2", "table3", "table4", "markov-example", "graphical-example"];

/// Named benchmark distributions: `table1`/`table2` are the 6-dimensional
/// truncated Gaussians, `table3` a shared-transition Markov chain (d=8, N=5),
/// `table4` a rank-3 clique model (d=10, N=5), and the two `-example`
/// presets the per-step Markov chain and the generic clique model used for
/// compression.
pub fn preset(name: &str, seed: u64) -> Result<BenchmarkDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match name {
        "table1" => BenchmarkDistribution::TruncatedGaussian(TruncatedGaussian::new(group_independent_covariance(), 6)?),
        "table2" => BenchmarkDistribution::TruncatedGaussian(TruncatedGaussian::new(band_diagonal_covariance(), 6)?),
        "table3" => BenchmarkDistribution::MarkovChain(MarkovChain::random_shared(8, 5, &mut rng)?),
        "markov-example" => BenchmarkDistribution::MarkovChain(MarkovChain::random_per_step(8, 5, &mut rng)?),
        "table4" => {
            BenchmarkDistribution::GraphicalModel(GraphicalModel::random(10, 5, &example_cliques(), Some(3), &mut rng)?)
        }
        "graphical-example" => {
            BenchmarkDistribution::GraphicalModel(GraphicalModel::random(10, 5, &example_cliques(), None, &mut rng)?)
        }
        other => return Err(Error::Config(format!("unknown preset '{other}' (expected one of {PRESETS:?})"))),
    })
}

impl DistributionSpec {
    pub fn build(&self) -> Result<BenchmarkDistribution> {
        match self {
            DistributionSpec::Preset { preset: name, seed } => preset(name, *seed),
            DistributionSpec::Explicit(e) => e.build(),
        }
    }
}

impl ExplicitSpec {
    pub fn build(&self) -> Result<BenchmarkDistribution> {
        match self {
            ExplicitSpec::TruncatedGaussian { covariance } => {
                let d = covariance.len();
                if covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::Config("covariance must be square".into()));
                }
                Ok(BenchmarkDistribution::TruncatedGaussian(TruncatedGaussian::new(covariance.concat(), d)?))
            }
            ExplicitSpec::MarkovChain { d, n_states, transitions, initial, shared, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let init = initial.clone().unwrap_or_else(|| vec![1.0 / *n_states as f64; *n_states]);
                let t = match transitions {
                    Some(t) => t.iter().map(|m| m.concat()).collect(),
                    None if *shared => vec![make_rank2_stochastic(*n_states, &mut rng)?; d.saturating_sub(1)],
                    None => (1..*d).map(|_| make_rank2_stochastic(*n_states, &mut rng)).collect::<Result<_>>()?,
                };
                Ok(BenchmarkDistribution::MarkovChain(MarkovChain::new(init, t)?))
            }
            ExplicitSpec::GraphicalModel { d, n_states, cliques, clique_rank, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                if cliques.iter().flatten().any(|&v| v == 0 || v > *d) {
                    return Err(Error::Config("clique variables must be in 1..=d".into()));
                }
                let c: Vec<Vec<usize>> = cliques.iter().map(|c| c.iter().map(|v| v - 1).collect()).collect();
                Ok(BenchmarkDistribution::GraphicalModel(GraphicalModel::random(*d, *n_states, &c, *clique_rank, &mut rng)?))
            }
            ExplicitSpec::ProductMixture { weights, components } => {
                Ok(BenchmarkDistribution::ProductMixture(ProductMixture::new(weights.clone(), components.clone())?))
            }
        }
    }
}
