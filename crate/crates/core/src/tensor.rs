//! Dense row-major tensors and the few index manipulations the tree code needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default cap on the number of entries of a materialized full tensor.
pub const DEFAULT_FULL_CAP: usize = 1 << 24;

/// Dense tensor, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let st = strides(&self.shape);
        self.data[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Reorders axes so that new axis `k` is old axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> DenseTensor {
        let nd = self.shape.len();
        debug_assert_eq!(perm.len(), nd);
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let old_st = strides(&self.shape);
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_st: Vec<usize> = perm.iter().map(|&p| old_st[p]).collect();
        let total = self.data.len();
        let mut out = Vec::with_capacity(total);
        if total == 0 {
            return DenseTensor { shape: new_shape, data: out };
        }
        // odometer over the new index, innermost axis handled in a tight loop
        let last = nd - 1;
        let inner = new_shape[last];
        let inner_st = src_st[last];
        let mut idx = vec![0usize; nd];
        let mut base = 0usize;
        loop {
            for j in 0..inner {
                out.push(self.data[base + j * inner_st]);
            }
            // advance outer axes
            let mut ax = last;
            loop {
                if ax == 0 {
                    return DenseTensor { shape: new_shape, data: out };
                }
                ax -= 1;
                idx[ax] += 1;
                base += src_st[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                base -= src_st[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
    }

    /// Moves the listed axes to the front (in the given order) and returns the
    /// matricization `rows x cols` with rows indexing those axes.
    pub fn matricize(&self, row_axes: &[usize]) -> (Vec<f64>, usize, usize) {
        let mut perm: Vec<usize> = row_axes.to_vec();
        perm.extend((0..self.ndim()).filter(|a| !row_axes.contains(a)));
        let t = self.permute(&perm);
        let rows: usize = row_axes.iter().map(|&a| self.shape[a]).product();
        let cols = if rows == 0 { 0 } else { t.data.len() / rows };
        (t.data, rows, cols)
    }

    /// Applies `m` (new_dim x old_dim) along `axis`.
    pub fn mode_product(&self, axis: usize, m: &[f64], new_dim: usize) -> DenseTensor {
        let old = self.shape[axis];
        debug_assert_eq!(m.len(), new_dim * old);
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * new_dim * inner];
        for o in 0..outer {
            let src = &self.data[o * old * inner..(o + 1) * old * inner];
            let res = linalg::matmul(m, src, new_dim, old, inner);
            out[o * new_dim * inner..(o + 1) * new_dim * inner].copy_from_slice(&res);
        }
        let mut shape = self.shape.clone();
        shape[axis] = new_dim;
        DenseTensor { shape, data: out }
    }

    /// Contracts axis `axis` of `self` with the last axis of `other`. The
    /// result keeps the remaining axes of `self` in order followed by the
    /// leading axes of `other`.
    pub fn contract_last(&self, axis: usize, other: &DenseTensor) -> DenseTensor {
        let k = self.shape[axis];
        debug_assert_eq!(*other.shape.last().unwrap(), k);
        let mut perm: Vec<usize> = (0..self.ndim()).filter(|&a| a != axis).collect();
        perm.push(axis);
        let a = self.permute(&perm);
        let m = a.data.len() / k.max(1);
        let n = other.data.len() / k.max(1);
        let data = linalg::matmul_nt(&a.data, &other.data, m, k, n);
        let mut shape: Vec<usize> = perm[..perm.len() - 1].iter().map(|&p| self.shape[p]).collect();
        shape.extend_from_slice(&other.shape[..other.ndim() - 1]);
        DenseTensor { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_get(t: &DenseTensor, idx: &[usize]) -> f64 {
        t.get(idx)
    }

    #[test]
    fn permute_matches_index_map() {
        let shape = vec![2, 3, 4];
        let data: Vec<f64> = (0..24).map(|v| v as f64).collect();
        let t = DenseTensor::new(shape, data).unwrap();
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.shape, vec![4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.get(&[k, i, j]), naive_get(&t, &[i, j, k]));
                }
            }
        }
    }

    #[test]
    fn contraction_against_loops() {
        let a = DenseTensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = DenseTensor::new(vec![4, 2], (0..8).map(|v| v as f64 - 2.0).collect()).unwrap();
        let c = a.contract_last(0, &b);
        assert_eq!(c.shape, vec![3, 4]);
        for j in 0..3 {
            for l in 0..4 {
                let want: f64 = (0..2).map(|i| a.get(&[i, j]) * b.get(&[l, i])).sum();
                assert!((c.get(&[j, l]) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mode_product_against_loops() {
        let t = DenseTensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let m = vec![1.0, 0.5, -1.0, 2.0, 0.0, 1.0];
        let r = t.mode_product(1, &m, 2);
        for i in 0..2 {
            for a in 0..2 {
                for k in 0..2 {
                    let want: f64 = (0..3).map(|b| m[a * 3 + b] * t.get(&[i, b, k])).sum();
                    assert!((r.get(&[i, a, k]) - want).abs() < 1e-14);
                }
            }
        }
    }
}
