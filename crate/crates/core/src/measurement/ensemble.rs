use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;

use crate::dense::{self, packed_len};
use crate::error::{Error, Result};
use crate::rng;

/// Number of measurements handled per parallel work unit. Fixed so that
/// reductions are grouped identically regardless of the thread count.
const CHUNK: usize = 64;

/// Which random family an ensemble was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnsembleKind {
    /// Gaussian orthogonal ensemble: N(0,2) diagonal, N(0,1) off-diagonal.
    Goe,
    /// i.i.d. 0/1 entries with success probability `rho`; not symmetric.
    Bernoulli { rho: f64 },
    /// Matrices supplied by the caller (e.g. a reduced SDP).
    Explicit,
}

impl EnsembleKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::Goe => "goe",
            EnsembleKind::Bernoulli { .. } => "bernoulli",
            EnsembleKind::Explicit => "explicit",
        }
    }

    pub fn density(&self) -> Option<f64> {
        match self {
            EnsembleKind::Bernoulli { rho } => Some(*rho),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Symmetric matrices, upper triangle packed row-major, `m` blocks of
    /// `n(n+1)/2` values back to back.
    Packed(Vec<f64>),
    /// Coordinate lists; matrix `i` owns `offsets[i]..offsets[i+1]`.
    Sparse {
        offsets: Vec<usize>,
        rows: Vec<u32>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    },
}

/// The sensing matrices `A_1 … A_m` defining `𝒜(X)_i = trace(A_i X)`.
///
/// Immutable after construction; all kernels take `&self` and are safe to
/// call from several threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    kind: EnsembleKind,
    n: usize,
    m: usize,
    storage: Storage,
}

/// Symmetric n×n GOE draw.
pub fn sample_goe<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Mat<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    let mut packed = vec![0.0; packed_len(n)];
    fill_goe_packed(n, rng, &mut packed);
    Ok(dense::unpack_symmetric(&packed, n))
}

fn fill_goe_packed<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut [f64]) {
    let mut idx = 0;
    for j in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        out[idx] = std::f64::consts::SQRT_2 * d;
        idx += 1;
        for _ in j + 1..n {
            out[idx] = rng.sample(StandardNormal);
            idx += 1;
        }
    }
}

/// Sparse Bernoulli draw as sorted `(row, col)` positions of the ones.
pub fn sample_bernoulli<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidDensity(rho));
    }
    let total = (n as u64) * (n as u64);
    let mut out = Vec::with_capacity(((total as f64) * rho * 1.2) as usize + 8);
    if rho == 1.0 {
        for pos in 0..total {
            out.push(((pos / n as u64) as u32, (pos % n as u64) as u32));
        }
        return Ok(out);
    }
    // Skip over runs of zeros: the gap before each one is geometric.
    let gaps = Geometric::new(rho).map_err(|_| Error::InvalidDensity(rho))?;
    let mut pos: u64 = 0;
    loop {
        let skip = gaps.sample(rng);
        pos = match pos.checked_add(skip) {
            Some(p) if p < total => p,
            _ => break,
        };
        out.push(((pos / n as u64) as u32, (pos % n as u64) as u32));
        pos += 1;
    }
    Ok(out)
}

impl MeasurementEnsemble {
    /// Draws `m` GOE matrices; matrix `i` uses stream `i` of `seed`.
    pub fn goe(n: usize, m: usize, seed: u64) -> Result<Self> {
        check_dims(n, m)?;
        let p = packed_len(n);
        let mut packed = vec![0.0; m * p];
        packed.par_chunks_mut(p).enumerate().for_each(|(i, block)| {
            let mut rng = rng::stream_rng(seed, i as u64);
            fill_goe_packed(n, &mut rng, block);
        });
        Ok(Self {
            kind: EnsembleKind::Goe,
            n,
            m,
            storage: Storage::Packed(packed),
        })
    }

    /// Draws `m` sparse Bernoulli(ρ) matrices; matrix `i` uses stream `i`.
    pub fn bernoulli(n: usize, m: usize, rho: f64, seed: u64) -> Result<Self> {
        check_dims(n, m)?;
        let mats: Vec<Vec<(u32, u32)>> = (0..m)
            .into_par_iter()
            .map(|i| sample_bernoulli(n, rho, &mut rng::stream_rng(seed, i as u64)))
            .collect::<Result<_>>()?;
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        let total: usize = mats.iter().map(Vec::len).sum();
        let mut rows = Vec::with_capacity(total);
        let mut cols = Vec::with_capacity(total);
        for mat in &mats {
            for &(r, c) in mat {
                rows.push(r);
                cols.push(c);
            }
            offsets.push(rows.len());
        }
        Ok(Self {
            kind: EnsembleKind::Bernoulli { rho },
            n,
            m,
            storage: Storage::Sparse {
                offsets,
                vals: vec![1.0; rows.len()],
                rows,
                cols,
            },
        })
    }

    /// Ensemble from explicit symmetric matrices (checked to `1e-12` relative).
    pub fn from_symmetric(kind: EnsembleKind, mats: &[Mat<f64>]) -> Result<Self> {
        let m = mats.len();
        let n = mats.first().map(|a| a.nrows()).unwrap_or(0);
        check_dims(n, m)?;
        let p = packed_len(n);
        let mut packed = Vec::with_capacity(m * p);
        for (i, a) in mats.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Shape(format!(
                    "matrix {i} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let scale = dense::frobenius(a.as_ref()).max(1.0);
            for j in 0..n {
                for k in j..n {
                    if (a[(j, k)] - a[(k, j)]).abs() > 1e-12 * scale {
                        return Err(Error::Shape(format!("matrix {i} is not symmetric")));
                    }
                    packed.push(a[(j, k)]);
                }
            }
        }
        Ok(Self {
            kind,
            n,
            m,
            storage: Storage::Packed(packed),
        })
    }

    /// Ensemble from raw packed upper triangles (`m · n(n+1)/2` values).
    pub fn from_packed(kind: EnsembleKind, n: usize, m: usize, packed: Vec<f64>) -> Result<Self> {
        check_dims(n, m)?;
        if packed.len() != m * packed_len(n) {
            return Err(Error::Shape(format!(
                "packed data has {} values, expected {}",
                packed.len(),
                m * packed_len(n)
            )));
        }
        Ok(Self {
            kind,
            n,
            m,
            storage: Storage::Packed(packed),
        })
    }

    /// Ensemble from per-matrix coordinate lists.
    pub fn from_triplets(
        kind: EnsembleKind,
        n: usize,
        mats: &[Vec<(u32, u32, f64)>],
    ) -> Result<Self> {
        let m = mats.len();
        check_dims(n, m)?;
        let mut offsets = vec![0];
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for (i, mat) in mats.iter().enumerate() {
            for &(r, c, v) in mat {
                if r as usize >= n || c as usize >= n {
                    return Err(Error::Shape(format!(
                        "entry ({r}, {c}) of matrix {i} outside {n}x{n}"
                    )));
                }
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
            offsets.push(rows.len());
        }
        Ok(Self {
            kind,
            n,
            m,
            storage: Storage::Sparse {
                offsets,
                rows,
                cols,
                vals,
            },
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    /// Whether every `A_i` is symmetric by construction.
    pub fn is_symmetric(&self) -> bool {
        matches!(self.storage, Storage::Packed(_))
    }

    /// Packed upper triangle of matrix `i` (dense storage only).
    pub fn packed(&self, i: usize) -> Option<&[f64]> {
        match &self.storage {
            Storage::Packed(data) => {
                let p = packed_len(self.n);
                Some(&data[i * p..(i + 1) * p])
            }
            Storage::Sparse { .. } => None,
        }
    }

    /// Raw packed storage of all matrices (dense storage only).
    pub fn packed_all(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Packed(data) => Some(data),
            Storage::Sparse { .. } => None,
        }
    }

    /// Coordinate entries of matrix `i` (sparse storage only).
    pub fn triplets(&self, i: usize) -> Option<impl Iterator<Item = (u32, u32, f64)> + '_> {
        match &self.storage {
            Storage::Sparse {
                offsets,
                rows,
                cols,
                vals,
            } => {
                let range = offsets[i]..offsets[i + 1];
                Some(
                    rows[range.clone()]
                        .iter()
                        .zip(&cols[range.clone()])
                        .zip(&vals[range])
                        .map(|((&r, &c), &v)| (r, c, v)),
                )
            }
            Storage::Packed(_) => None,
        }
    }

    /// Stored entries of matrix `i` (`n(n+1)/2` for packed storage).
    pub fn nnz(&self, i: usize) -> usize {
        match &self.storage {
            Storage::Packed(_) => packed_len(self.n),
            Storage::Sparse { offsets, .. } => offsets[i + 1] - offsets[i],
        }
    }

    pub fn total_nnz(&self) -> usize {
        match &self.storage {
            Storage::Packed(data) => data.len(),
            Storage::Sparse { rows, .. } => rows.len(),
        }
    }

    /// Dense copy of `A_i`.
    pub fn matrix(&self, i: usize) -> Mat<f64> {
        match &self.storage {
            Storage::Packed(_) => dense::unpack_symmetric(self.packed(i).unwrap(), self.n),
            Storage::Sparse { .. } => {
                let mut a = Mat::<f64>::zeros(self.n, self.n);
                for (r, c, v) in self.triplets(i).unwrap() {
                    a[(r as usize, c as usize)] += v;
                }
                a
            }
        }
    }

    fn check_square(&self, x: MatRef<'_, f64>) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(Error::Shape(format!(
                "operator expects {n}x{n}, got {}x{}",
                x.nrows(),
                x.ncols(),
                n = self.n
            )));
        }
        Ok(())
    }

    fn check_coeffs(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.m {
            return Err(Error::Shape(format!(
                "coefficient vector has length {}, expected m = {}",
                alpha.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// `𝒜(X)_i = trace(A_i X)`.
    pub fn apply(&self, x: MatRef<'_, f64>) -> Result<Vec<f64>> {
        self.check_square(x)?;
        Ok(match &self.storage {
            Storage::Packed(_) => self.packed_dots(&dense::pack_weighted(x)),
            Storage::Sparse { .. } => self.sparse_map(|r, c, v| v * x[(c as usize, r as usize)]),
        })
    }

    /// `⟨A_i, X⟩` (Frobenius pairing). Equal to [`apply`](Self::apply) for
    /// symmetric `A_i` or symmetric `X`; this is the exact adjoint partner of
    /// [`adjoint`](Self::adjoint) for arbitrary `X`.
    pub fn apply_frobenius(&self, x: MatRef<'_, f64>) -> Result<Vec<f64>> {
        self.check_square(x)?;
        Ok(match &self.storage {
            Storage::Packed(_) => self.packed_dots(&dense::pack_weighted(x)),
            Storage::Sparse { .. } => self.sparse_map(|r, c, v| v * x[(r as usize, c as usize)]),
        })
    }

    /// `𝒜ᵀ(α) = Σ α_i A_i`.
    pub fn adjoint(&self, alpha: &[f64]) -> Result<Mat<f64>> {
        self.check_coeffs(alpha)?;
        Ok(match &self.storage {
            Storage::Packed(_) => dense::unpack_symmetric(&self.packed_combination(alpha), self.n),
            Storage::Sparse { .. } => {
                let mut s = Mat::<f64>::zeros(self.n, self.n);
                for (i, &a) in alpha.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (r, c, v) in self.triplets(i).unwrap() {
                        s[(r as usize, c as usize)] += a * v;
                    }
                }
                s
            }
        })
    }

    /// `trace(Zᵀ A_i Z)` for every `i`, without forming `Z Zᵀ` for sparse
    /// storage.
    pub fn quad_forms(&self, z: MatRef<'_, f64>) -> Result<Vec<f64>> {
        self.check_factor(z)?;
        Ok(match &self.storage {
            Storage::Packed(_) => self.packed_dots(&dense::pack_weighted_gram(z)),
            Storage::Sparse { .. } => {
                let r = z.ncols();
                let rows = dense::rows_of(z);
                self.sparse_map(|i, j, v| {
                    let (i, j) = (i as usize, j as usize);
                    v * dense::dot(&rows[i * r..(i + 1) * r], &rows[j * r..(j + 1) * r])
                })
            }
        })
    }

    /// `Σ c_i · ½(A_i + A_iᵀ) Z`, the matrix part of the objective gradient.
    pub fn symmetric_action(&self, c: &[f64], z: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_coeffs(c)?;
        self.check_factor(z)?;
        let (n, r) = (self.n, z.ncols());
        match &self.storage {
            Storage::Packed(_) => {
                let s = dense::unpack_symmetric(&self.packed_combination(c), n);
                let mut out = Mat::<f64>::zeros(n, r);
                matmul(out.as_mut(), Accum::Replace, s.as_ref(), z, 1.0, Par::Seq);
                Ok(out)
            }
            Storage::Sparse { .. } => {
                let zr = dense::rows_of(z);
                let mut g = vec![0.0; n * r];
                for (i, &ci) in c.iter().enumerate() {
                    if ci == 0.0 {
                        continue;
                    }
                    for (a, b, v) in self.triplets(i).unwrap() {
                        let (a, b) = (a as usize, b as usize);
                        let w = 0.5 * ci * v;
                        for l in 0..r {
                            g[a * r + l] += w * zr[b * r + l];
                            g[b * r + l] += w * zr[a * r + l];
                        }
                    }
                }
                Ok(dense::from_rows(&g, n, r))
            }
        }
    }

    /// Gram matrix `G_ij = ⟨A_i, A_j⟩` (m×m).
    pub fn gram(&self) -> Mat<f64> {
        let m = self.m;
        let mut g = Mat::<f64>::zeros(m, m);
        match &self.storage {
            Storage::Packed(data) => {
                let p = packed_len(self.n);
                let all = MatRef::from_row_major_slice(data, m, p);
                // Row weights turn the packed dot into the Frobenius product.
                let weights: Vec<f64> = (0..self.n)
                    .flat_map(|j| {
                        std::iter::once(1.0).chain(std::iter::repeat_n(2.0, self.n - j - 1))
                    })
                    .collect();
                const BLOCK: usize = 128;
                let mut start = 0;
                while start < m {
                    let end = (start + BLOCK).min(m);
                    let scaled =
                        Mat::from_fn(end - start, p, |i, k| all[(start + i, k)] * weights[k]);
                    let dst: MatMut<'_, f64> = g.as_mut().submatrix_mut(start, 0, end - start, end);
                    matmul(
                        dst,
                        Accum::Replace,
                        scaled.as_ref(),
                        all.subrows(0, end).transpose(),
                        1.0,
                        Par::Seq,
                    );
                    start = end;
                }
                for i in 0..m {
                    for j in i + 1..m {
                        g[(i, j)] = g[(j, i)];
                    }
                }
            }
            Storage::Sparse { .. } => {
                // Group entries by position; only matrices sharing a position
                // contribute to each other's inner product.
                let n = self.n as u64;
                let mut keyed: Vec<(u64, u32, f64)> = Vec::with_capacity(self.total_nnz());
                for i in 0..m {
                    for (r, c, v) in self.triplets(i).unwrap() {
                        keyed.push((r as u64 * n + c as u64, i as u32, v));
                    }
                }
                keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut s = 0;
                while s < keyed.len() {
                    let mut e = s + 1;
                    while e < keyed.len() && keyed[e].0 == keyed[s].0 {
                        e += 1;
                    }
                    for a in s..e {
                        for b in s..e {
                            g[(keyed[a].1 as usize, keyed[b].1 as usize)] +=
                                keyed[a].2 * keyed[b].2;
                        }
                    }
                    s = e;
                }
            }
        }
        g
    }

    fn check_factor(&self, z: MatRef<'_, f64>) -> Result<()> {
        if z.nrows() != self.n {
            return Err(Error::Shape(format!(
                "factor has {} rows, expected n = {}",
                z.nrows(),
                self.n
            )));
        }
        Ok(())
    }

    fn packed_dots(&self, w: &[f64]) -> Vec<f64> {
        let Storage::Packed(data) = &self.storage else {
            unreachable!()
        };
        let p = w.len();
        let mut out = vec![0.0; self.m];
        out.par_chunks_mut(CHUNK)
            .zip(data.par_chunks(CHUNK * p))
            .for_each(|(o, block)| {
                for (oi, a) in o.iter_mut().zip(block.chunks_exact(p)) {
                    *oi = dense::dot(a, w);
                }
            });
        out
    }

    /// Packed `Σ c_i A_i`, reduced chunk by chunk in a fixed order.
    fn packed_combination(&self, c: &[f64]) -> Vec<f64> {
        let Storage::Packed(data) = &self.storage else {
            unreachable!()
        };
        let p = packed_len(self.n);
        const GROUP: usize = 4 * CHUNK;
        let partials: Vec<Vec<f64>> = data
            .par_chunks(GROUP * p)
            .zip(c.par_chunks(GROUP))
            .map(|(block, cs)| {
                let mut acc = vec![0.0; p];
                for (a, &ci) in block.chunks_exact(p).zip(cs) {
                    if ci != 0.0 {
                        dense::axpy(ci, a, &mut acc);
                    }
                }
                acc
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_else(|| vec![0.0; p]);
        for part in iter {
            for (t, v) in total.iter_mut().zip(&part) {
                *t += v;
            }
        }
        total
    }

    fn sparse_map<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(u32, u32, f64) -> f64 + Sync,
    {
        let Storage::Sparse {
            offsets,
            rows,
            cols,
            vals,
        } = &self.storage
        else {
            unreachable!()
        };
        (0..self.m)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                let mut s = 0.0;
                for k in offsets[i]..offsets[i + 1] {
                    s += f(rows[k], cols[k], vals[k]);
                }
                s
            })
            .collect()
    }
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidDimension("m must be at least 1".into()));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidDimension(format!("n = {n} too large")));
    }
    Ok(())
}
