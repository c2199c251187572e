//! Univariate orthonormal bases: indicators on a finite set and Legendre
//! polynomials on an interval, orthonormal for the Lebesgue measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Basis {
    /// Indicators of `{0, …, size-1}` (1-based in files).
    Canonical { size: usize },
    Legendre { interval: [f64; 2], max_degree: usize },
}

/// Slack allowed when checking that a point lies in a polynomial interval.
const DOMAIN_SLACK: f64 = 1e-12;

impl Basis {
    pub fn canonical(size: usize) -> Self {
        Basis::Canonical { size }
    }

    pub fn legendre(a: f64, b: f64, max_degree: usize) -> Self {
        Basis::Legendre { interval: [a, b], max_degree }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Basis::Canonical { size } if size == 0 => Err(Error::InvalidBasis("empty canonical basis".into())),
            Basis::Legendre { interval: [a, b], .. } if !(a < b) || !a.is_finite() || !b.is_finite() => {
                Err(Error::InvalidBasis(format!("bad interval [{a}, {b}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn size(&self) -> usize {
        match *self {
            Basis::Canonical { size } => size,
            Basis::Legendre { max_degree, .. } => max_degree + 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Basis::Canonical { .. })
    }

    /// Writes `Φ(x)` into `out` (length `size()`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        match *self {
            Basis::Canonical { size } => {
                let i = x.round();
                if (x - i).abs() > 1e-9 || i < 0.0 || i >= size as f64 {
                    return Err(Error::OutOfDomain(format!("{x} is not a state of 0..{size}")));
                }
                out.fill(0.0);
                out[i as usize] = 1.0;
            }
            Basis::Legendre { interval: [a, b], max_degree } => {
                let w = b - a;
                if x < a - DOMAIN_SLACK * w || x > b + DOMAIN_SLACK * w || x.is_nan() {
                    return Err(Error::OutOfDomain(format!("{x} outside [{a}, {b}]")));
                }
                let t = ((2.0 * x - a - b) / w).clamp(-1.0, 1.0);
                legendre_values(t, max_degree, out);
                for (k, v) in out.iter_mut().enumerate() {
                    *v *= ((2 * k + 1) as f64 / w).sqrt();
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Nested index sets `I_1 ⊂ … ⊂ I_L` given by their sizes. Polynomials
    /// nest by degree; indicators have the single full set.
    pub fn candidate_patterns(&self) -> Vec<usize> {
        match *self {
            Basis::Canonical { size } => vec![size],
            Basis::Legendre { max_degree, .. } => (1..=max_degree + 1).collect(),
        }
    }

    /// Gram matrix `∫ φ_i φ_j dμ` (row-major), by Gauss–Legendre quadrature for
    /// polynomials and exactly for indicators.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.size();
        let mut g = vec![0.0; n * n];
        match *self {
            Basis::Canonical { .. } => {
                for i in 0..n {
                    let phi = self.eval(i as f64).unwrap();
                    for a in 0..n {
                        for b in 0..n {
                            g[a * n + b] += phi[a] * phi[b];
                        }
                    }
                }
            }
            Basis::Legendre { interval: [a, b], max_degree } => {
                let q = (2 * max_degree + 1).div_ceil(2) + 1;
                let (nodes, weights) = gauss_legendre(q);
                let half = 0.5 * (b - a);
                for (t, w) in nodes.iter().zip(&weights) {
                    let x = a + half * (t + 1.0);
                    let phi = self.eval(x).unwrap();
                    for i in 0..n {
                        for j in 0..n {
                            g[i * n + j] += w * half * phi[i] * phi[j];
                        }
                    }
                }
            }
        }
        g
    }
}

/// Legendre polynomials `P_0..P_p` at `t` by the three-term recurrence.
fn legendre_values(t: f64, p: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if p == 0 {
        return;
    }
    out[1] = t;
    for k in 1..p {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
