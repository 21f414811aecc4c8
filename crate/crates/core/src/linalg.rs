//! Dense linear-algebra kernels used by the solvers: symmetric eigenpairs,
//! randomized and exact rank-r SVD truncation, orthogonal Procrustes
//! alignment, singular value soft-thresholding and the spectral-norm ball
//! projection.
//!
//! Everything runs sequentially inside faer so results are bit-for-bit
//! reproducible for a given input and seed.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand_distr::{Distribution, StandardNormal};

use crate::dense;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Below this dimension [`best_rank_r`] uses an exact SVD.
pub const EXACT_SVD_BELOW: usize = 64;
pub const DEFAULT_OVERSAMPLE: usize = 8;
pub const DEFAULT_POWER_ITERS: usize = 2;

/// Eigenpairs ordered by decreasing `|λ|`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// n×r, orthonormal columns.
    pub vectors: Mat<f64>,
}

/// Optimal orthogonal alignment of a factor onto a reference factor.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// r×r orthogonal matrix `U` minimizing `‖Z − Z★U‖_F`.
    pub rotation: Mat<f64>,
    pub distance: f64,
}

/// Thin factorization `U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct LowRankSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

impl LowRankSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let us = Mat::from_fn(self.u.nrows(), self.s.len(), |i, j| {
            self.u[(i, j)] * self.s[j]
        });
        let mut out = Mat::<f64>::zeros(self.u.nrows(), self.v.nrows());
        matmul(
            out.as_mut(),
            Accum::Replace,
            us.as_ref(),
            self.v.transpose(),
            1.0,
            Par::Seq,
        );
        out
    }
}

fn check_finite(m: MatRef<'_, f64>) -> Result<()> {
    if dense::is_finite(m) {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

/// Flips each column so its largest-magnitude entry is positive (first
/// index wins ties).
pub fn canonical_signs(v: &mut Mat<f64>) {
    for j in 0..v.ncols() {
        let mut best = 0;
        for i in 1..v.nrows() {
            if v[(i, j)].abs() > v[(best, j)].abs() {
                best = i;
            }
        }
        if v[(best, j)] < 0.0 {
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}

/// Full symmetric eigendecomposition of `(M + Mᵀ)/2`, eigenvalues ascending.
fn sym_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let sym = dense::symmetrize(m);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..sym.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// All eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    Ok(sym_eigen(m)?.0)
}

/// The `r` eigenpairs of largest `|λ|` of the symmetric part of `m`.
///
/// Each returned pair satisfies `‖M v − λ v‖ ≤ tol · ‖M‖_F`; a larger
/// residual is reported as a numeric error.
pub fn top_r_eigenpairs(m: MatRef<'_, f64>, r: usize, tol: f64) -> Result<EigenPairs> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if r == 0 || r > n {
        return Err(Error::InvalidRank { rank: r, n });
    }
    check_finite(m)?;
    let (vals, vecs) = sym_eigen(m)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        vals[b]
            .abs()
            .total_cmp(&vals[a].abs())
            .then(vals[b].total_cmp(&vals[a]))
    });
    order.truncate(r);
    let values: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut vectors = Mat::from_fn(n, r, |i, j| vecs[(i, order[j])]);
    canonical_signs(&mut vectors);

    let sym = dense::symmetrize(m);
    let scale = dense::frobenius(sym.as_ref());
    let mv = &sym * &vectors;
    for (j, &lambda) in values.iter().enumerate() {
        let res: f64 = (0..n)
            .map(|i| (mv[(i, j)] - lambda * vectors[(i, j)]).powi(2))
            .sum::<f64>()
            .sqrt();
        if res > tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numeric(format!(
                "eigenpair {j} residual {res:.3e} exceeds {tol:.1e}·‖M‖_F"
            )));
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Largest `|λ|` of a symmetric matrix (its operator norm).
pub fn symmetric_operator_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let pairs = top_r_eigenpairs(m, 1, 1e-8)?;
    Ok(pairs.values[0].abs())
}

/// Largest singular value of an arbitrary square matrix, from the top
/// eigenvalue of `MᵀM`.
pub fn operator_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let mtm = m.transpose() * m;
    Ok(symmetric_operator_norm(mtm.as_ref())?.max(0.0).sqrt())
}

/// Exact thin SVD.
pub fn svd(x: MatRef<'_, f64>) -> Result<LowRankSvd> {
    check_finite(x)?;
    let dec = x
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("svd failed: {e:?}")))?;
    let s = dec.S().column_vector();
    Ok(LowRankSvd {
        u: dec.U().to_owned(),
        s: (0..s.nrows()).map(|i| s[i]).collect(),
        v: dec.V().to_owned(),
    })
}

pub fn singular_values(x: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_finite(x)?;
    x.singular_values()
        .map_err(|e| Error::Numeric(format!("svd failed: {e:?}")))
}

fn truncate(full: LowRankSvd, r: usize) -> LowRankSvd {
    let r = r.min(full.s.len());
    LowRankSvd {
        u: full.u.subcols(0, r).to_owned(),
        s: full.s[..r].to_vec(),
        v: full.v.subcols(0, r).to_owned(),
    }
}

fn orthonormal_basis(y: &Mat<f64>) -> Mat<f64> {
    y.qr().compute_thin_Q()
}

/// Randomized range finder followed by an exact SVD of the small projected
/// matrix (Gaussian test matrix, `power_iters` rounds of re-orthonormalized
/// subspace iteration).
pub fn randomized_svd(
    x: MatRef<'_, f64>,
    r: usize,
    oversample: usize,
    power_iters: usize,
    rng: &mut Rng,
) -> Result<LowRankSvd> {
    let (rows, cols) = (x.nrows(), x.ncols());
    let k = r + oversample;
    if r == 0 || k > rows.min(cols) {
        return Err(Error::Shape(format!(
            "rank {r} plus oversampling {oversample} exceeds {}",
            rows.min(cols)
        )));
    }
    check_finite(x)?;
    let mut sketch_rng = rng::rng_from_seed(rng::fresh_seed(rng));
    let omega = Mat::from_fn(cols, k, |_, _| -> f64 {
        StandardNormal.sample(&mut sketch_rng)
    });
    let mut y = Mat::<f64>::zeros(rows, k);
    matmul(y.as_mut(), Accum::Replace, x, omega.as_ref(), 1.0, Par::Seq);
    let mut q = orthonormal_basis(&y);
    let mut w = Mat::<f64>::zeros(cols, k);
    for _ in 0..power_iters {
        matmul(
            w.as_mut(),
            Accum::Replace,
            x.transpose(),
            q.as_ref(),
            1.0,
            Par::Seq,
        );
        let qw = orthonormal_basis(&w);
        matmul(y.as_mut(), Accum::Replace, x, qw.as_ref(), 1.0, Par::Seq);
        q = orthonormal_basis(&y);
    }
    let mut b = Mat::<f64>::zeros(k, cols);
    matmul(b.as_mut(), Accum::Replace, q.transpose(), x, 1.0, Par::Seq);
    let small = svd(b.as_ref())?;
    let mut u = Mat::<f64>::zeros(rows, small.u.ncols());
    matmul(
        u.as_mut(),
        Accum::Replace,
        q.as_ref(),
        small.u.as_ref(),
        1.0,
        Par::Seq,
    );
    Ok(truncate(
        LowRankSvd {
            u,
            s: small.s,
            v: small.v,
        },
        r,
    ))
}

/// Best rank-r approximation as factors: exact SVD below
/// [`EXACT_SVD_BELOW`], randomized SVD with the default oversampling and
/// power iterations otherwise.
pub fn best_rank_r_factors(x: MatRef<'_, f64>, r: usize, rng: &mut Rng) -> Result<LowRankSvd> {
    let n = x.nrows().min(x.ncols());
    if r == 0 || r > n {
        return Err(Error::InvalidRank { rank: r, n });
    }
    if n < EXACT_SVD_BELOW || r + DEFAULT_OVERSAMPLE > n {
        return Ok(truncate(svd(x)?, r));
    }
    if is_exactly_symmetric(x) {
        return randomized_symmetric_truncation(x, r, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, rng);
    }
    randomized_svd(x, r, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, rng)
}

/// Range finder on a symmetric `x`, then the eigendecomposition of the
/// projected `QᵀXQ`. The result `Q W_r Λ_r W_rᵀ Qᵀ` is exactly symmetric,
/// which a one-sided randomized SVD does not guarantee.
pub fn randomized_symmetric_truncation(
    x: MatRef<'_, f64>,
    r: usize,
    oversample: usize,
    power_iters: usize,
    rng: &mut Rng,
) -> Result<LowRankSvd> {
    let n = x.nrows();
    let k = r + oversample;
    if x.ncols() != n {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            n,
            x.ncols()
        )));
    }
    if r == 0 || k > n {
        return Err(Error::Shape(format!(
            "rank {r} plus oversampling {oversample} exceeds {n}"
        )));
    }
    check_finite(x)?;
    let mut sketch_rng = rng::rng_from_seed(rng::fresh_seed(rng));
    let omega = Mat::from_fn(n, k, |_, _| -> f64 {
        StandardNormal.sample(&mut sketch_rng)
    });
    let mut y = Mat::<f64>::zeros(n, k);
    matmul(y.as_mut(), Accum::Replace, x, omega.as_ref(), 1.0, Par::Seq);
    let mut q = orthonormal_basis(&y);
    for _ in 0..power_iters {
        matmul(y.as_mut(), Accum::Replace, x, q.as_ref(), 1.0, Par::Seq);
        q = orthonormal_basis(&y);
    }
    let mut xq = Mat::<f64>::zeros(n, k);
    matmul(xq.as_mut(), Accum::Replace, x, q.as_ref(), 1.0, Par::Seq);
    let mut t = Mat::<f64>::zeros(k, k);
    matmul(
        t.as_mut(),
        Accum::Replace,
        q.transpose(),
        xq.as_ref(),
        1.0,
        Par::Seq,
    );
    let (vals, vecs) = sym_eigen(t.as_ref())?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
    order.truncate(r);
    let w = Mat::from_fn(k, r, |i, j| vecs[(i, order[j])]);
    let mut u = Mat::<f64>::zeros(n, r);
    matmul(
        u.as_mut(),
        Accum::Replace,
        q.as_ref(),
        w.as_ref(),
        1.0,
        Par::Seq,
    );
    let v = Mat::from_fn(n, r, |i, j| u[(i, j)] * vals[order[j]].signum());
    Ok(LowRankSvd {
        u,
        s: order.iter().map(|&i| vals[i].abs()).collect(),
        v,
    })
}

/// Best rank-r approximation (Eckart–Young truncation).
pub fn best_rank_r(x: MatRef<'_, f64>, r: usize, rng: &mut Rng) -> Result<Mat<f64>> {
    Ok(best_rank_r_factors(x, r, rng)?.to_dense())
}

/// Solves `min_U ‖Z − Z★U‖_F` over orthogonal `U` via the SVD of `Z★ᵀZ`.
pub fn procrustes_align(z: MatRef<'_, f64>, zstar: MatRef<'_, f64>) -> Result<AlignmentResult> {
    if z.nrows() != zstar.nrows() || z.ncols() != zstar.ncols() {
        return Err(Error::Shape(format!(
            "factor shapes differ: {}x{} vs {}x{}",
            z.nrows(),
            z.ncols(),
            zstar.nrows(),
            zstar.ncols()
        )));
    }
    let cross = zstar.transpose() * z;
    let dec = svd(cross.as_ref())?;
    let rotation = &dec.u * dec.v.transpose();
    let diff = z.to_owned() - zstar * &rotation;
    Ok(AlignmentResult {
        distance: dense::frobenius(diff.as_ref()),
        rotation,
    })
}

/// `d(Z, Z★)`.
pub fn procrustes_distance(z: MatRef<'_, f64>, zstar: MatRef<'_, f64>) -> Result<f64> {
    Ok(procrustes_align(z, zstar)?.distance)
}

fn is_exactly_symmetric(x: MatRef<'_, f64>) -> bool {
    x.nrows() == x.ncols() && (0..x.nrows()).all(|i| (0..i).all(|j| x[(i, j)] == x[(j, i)]))
}

/// Applies `g` to every singular value: `U g(Σ) Vᵀ`. Symmetric inputs take
/// an eigendecomposition shortcut and yield an exactly symmetric output.
fn map_singular_values(x: MatRef<'_, f64>, g: impl Fn(f64) -> f64) -> Result<Mat<f64>> {
    check_finite(x)?;
    if is_exactly_symmetric(x) {
        let (vals, vecs) = sym_eigen(x)?;
        let n = vals.len();
        let scaled = Mat::from_fn(n, n, |i, j| {
            vecs[(i, j)] * vals[j].signum() * g(vals[j].abs())
        });
        let mut out = Mat::<f64>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            scaled.as_ref(),
            vecs.transpose(),
            1.0,
            Par::Seq,
        );
        return Ok(dense::symmetrize(out.as_ref()));
    }
    let dec = svd(x)?;
    let us = Mat::from_fn(dec.u.nrows(), dec.s.len(), |i, j| {
        dec.u[(i, j)] * g(dec.s[j])
    });
    let mut out = Mat::<f64>::zeros(x.nrows(), x.ncols());
    matmul(
        out.as_mut(),
        Accum::Replace,
        us.as_ref(),
        dec.v.transpose(),
        1.0,
        Par::Seq,
    );
    Ok(out)
}

/// Singular value soft-thresholding `U max(Σ − η, 0) Vᵀ`.
pub fn svt_prox(x: MatRef<'_, f64>, eta: f64) -> Result<Mat<f64>> {
    if !(eta >= 0.0) {
        return Err(Error::Config(format!(
            "threshold must be nonnegative, got {eta}"
        )));
    }
    map_singular_values(x, |s| (s - eta).max(0.0))
}

/// Projection onto the unit spectral-norm ball `U min(Σ, 1) Vᵀ`.
pub fn spectral_ball_project(x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    map_singular_values(x, |s| s.min(1.0))
}
