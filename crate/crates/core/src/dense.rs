//! Small dense helpers shared by the operator and solver kernels.
//!
//! Symmetric matrices are stored "packed": the upper triangle in row-major
//! order, row `j` holding columns `j..n`. A packed *weighted* matrix doubles
//! the strictly-upper entries so that `trace(A X)` for symmetric packed `A`
//! reduces to a plain dot product with the weighted packing of `X`.

use faer::{Mat, MatRef};

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Offset of row `j` in the packed upper triangle.
#[inline]
pub fn row_start(n: usize, j: usize) -> usize {
    j * (2 * n - j + 1) / 2
}

/// Deterministic dot product with eight independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Weighted packing of an arbitrary square matrix: `w_jj = x_jj`,
/// `w_jk = x_jk + x_kj` for `j < k`.
pub fn pack_weighted(x: MatRef<'_, f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut w = Vec::with_capacity(packed_len(n));
    for j in 0..n {
        w.push(x[(j, j)]);
        for k in j + 1..n {
            w.push(x[(j, k)] + x[(k, j)]);
        }
    }
    w
}

/// Weighted packing of `Z Zᵀ` without forming the n×n product.
pub fn pack_weighted_gram(z: MatRef<'_, f64>) -> Vec<f64> {
    let rows = rows_of(z);
    let n = z.nrows();
    let r = z.ncols();
    let mut w = Vec::with_capacity(packed_len(n));
    for j in 0..n {
        let zj = &rows[j * r..(j + 1) * r];
        w.push(dot(zj, zj));
        for k in j + 1..n {
            w.push(2.0 * dot(zj, &rows[k * r..(k + 1) * r]));
        }
    }
    w
}

/// Symmetric matrix from a plain (unweighted) packed upper triangle.
pub fn unpack_symmetric(packed: &[f64], n: usize) -> Mat<f64> {
    debug_assert_eq!(packed.len(), packed_len(n));
    let mut m = Mat::<f64>::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for k in j..n {
            m[(j, k)] = packed[idx];
            m[(k, j)] = packed[idx];
            idx += 1;
        }
    }
    m
}

/// Row-major copy of a matrix (handy for r ≤ a few columns).
pub fn rows_of(z: MatRef<'_, f64>) -> Vec<f64> {
    let (n, r) = (z.nrows(), z.ncols());
    let mut out = Vec::with_capacity(n * r);
    for i in 0..n {
        for j in 0..r {
            out.push(z[(i, j)]);
        }
    }
    out
}

pub fn from_rows(rows: &[f64], n: usize, r: usize) -> Mat<f64> {
    Mat::from_fn(n, r, |i, j| rows[i * r + j])
}

pub fn frobenius(x: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            s += x[(i, j)] * x[(i, j)];
        }
    }
    s.sqrt()
}

/// Frobenius inner product.
pub fn inner(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    debug_assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

pub fn is_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `‖Z Zᵀ − W Wᵀ‖_F` in O(n r²): with `[Z W] = Q R`, the difference is
/// `Q R D Rᵀ Qᵀ` for `D = diag(I, −I)`.
pub fn factored_distance(z: MatRef<'_, f64>, w: MatRef<'_, f64>) -> f64 {
    let (n, rz, rw) = (z.nrows(), z.ncols(), w.ncols());
    let k = rz + rw;
    if k > n {
        let d = z * z.transpose() - w * w.transpose();
        return frobenius(d.as_ref());
    }
    let stacked = Mat::from_fn(n, k, |i, j| if j < rz { z[(i, j)] } else { w[(i, j - rz)] });
    let r = stacked.qr().thin_R().to_owned();
    let rd = Mat::from_fn(k, k, |i, j| if j < rz { r[(i, j)] } else { -r[(i, j)] });
    let core = &rd * r.transpose();
    frobenius(core.as_ref())
}
