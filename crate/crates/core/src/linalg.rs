//! Thin wrappers over faer for row-major buffers.

use faer::linalg::matmul::matmul as faer_matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{Error, Result};

fn view(data: &[f64], rows: usize, cols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `a (m x k) * b (k x n)`, all row-major.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    {
        let dst = faer::MatMut::from_row_major_slice_mut(&mut out, m, n);
        faer_matmul(dst, Accum::Replace, view(a, m, k), view(b, k, n), 1.0, Par::Seq);
    }
    out
}

/// `a^T (k x m)^T * b (k x n)`, i.e. the result is m x n.
pub fn matmul_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    {
        let dst = faer::MatMut::from_row_major_slice_mut(&mut out, m, n);
        faer_matmul(dst, Accum::Replace, view(a, k, m).transpose(), view(b, k, n), 1.0, Par::Seq);
    }
    out
}

/// `a (m x k) * b^T` where `b` is n x k.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    {
        let dst = faer::MatMut::from_row_major_slice_mut(&mut out, m, n);
        faer_matmul(dst, Accum::Replace, view(a, m, k), view(b, n, k).transpose(), 1.0, Par::Seq);
    }
    out
}

/// Thin QR of a row-major `rows x cols` matrix. Returns `(Q, R, k)` with
/// `k = min(rows, cols)`, `Q` of shape rows x k and `R` of shape k x cols.
pub fn qr(data: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let k = rows.min(cols);
    if k == 0 {
        return (vec![], vec![], 0);
    }
    let qr = view(data, rows, cols).qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut rr = vec![0.0; k * cols];
    for i in 0..k {
        for j in i..cols {
            rr[i * cols + j] = r[(i, j)];
        }
    }
    (to_row_major(q.as_ref()), rr, k)
}

/// Left singular vectors and singular values of a row-major matrix.
/// Returns `(U, s)` with `U` of shape rows x k, `k = min(rows, cols)`,
/// singular values in nonincreasing order.
pub fn left_svd(data: &[f64], rows: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = rows.min(cols);
    if k == 0 {
        return Ok((vec![], vec![]));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in SVD input".into()));
    }
    // Very wide: compress columns with a QR of the transpose first so that V
    // is never formed.
    if cols > 2 * rows {
        let m = view(data, rows, cols).transpose().to_owned();
        let qr = m.qr();
        let r = qr.thin_R(); // rows x rows, M^T = Q R  =>  M = R^T Q^T
        let rt: Mat<f64> = r.transpose().to_owned();
        let svd = rt
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
        let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
        return Ok((to_row_major(svd.U()), s));
    }
    let svd = view(data, rows, cols)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    Ok((to_row_major(svd.U()), s))
}

/// Singular values only.
pub fn singular_values(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    let k = rows.min(cols);
    if k == 0 {
        return Ok(vec![]);
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in SVD input".into()));
    }
    let m = if rows >= cols {
        view(data, rows, cols).to_owned()
    } else {
        view(data, rows, cols).transpose().to_owned()
    };
    let s = m
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    Ok(s)
}

/// Cholesky factor `L` (row-major, lower) of a symmetric positive definite matrix.
pub fn cholesky(data: &[f64], n: usize) -> Result<Vec<f64>> {
    let llt = view(data, n, n)
        .llt(faer::Side::Lower)
        .map_err(|_| Error::InvalidDistribution("matrix is not positive definite".into()))?;
    Ok(to_row_major(llt.L()))
}

/// Number of leading singular values to keep so that the discarded tail
/// energy is at most `threshold_sq`. Values tied with the last kept one (within
/// a relative 1e-12) are kept as well. At least one value is always kept.
pub fn rank_for_tail(s: &[f64], threshold_sq: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let mut tail = 0.0;
    let mut k = s.len();
    while k > 1 {
        let next = tail + s[k - 1] * s[k - 1];
        if next > threshold_sq {
            break;
        }
        tail = next;
        k -= 1;
    }
    // keep ties with the last retained value
    while k < s.len() && (s[k - 1] - s[k]).abs() <= 1e-12 * s[0].max(f64::MIN_POSITIVE) && s[k] > 0.0 {
        k += 1;
    }
    k
}
