use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use super::observe_dense;
use crate::dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Instance;
use crate::trace::{Estimate, Monitor, SolveResult, Termination};

/// Alternating least squares on `X = U Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltMinConfig {
    pub r: usize,
    pub max_iters: usize,
    pub rel_err_tol: f64,
    pub stall_tol: f64,
    /// Ridge added to each normal-equation system, relative to the mean of
    /// its diagonal.
    pub ls_regularization: f64,
}

impl Default for AltMinConfig {
    fn default() -> Self {
        Self {
            r: 1,
            max_iters: 10_000,
            rel_err_tol: 1e-5,
            stall_tol: 1e-12,
            ls_regularization: 1e-10,
        }
    }
}

impl AltMinConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.r == 0 || self.r > n {
            return Err(Error::InvalidRank { rank: self.r, n });
        }
        if !(self.ls_regularization >= 0.0) {
            return Err(Error::Config(
                "ls_regularization must be nonnegative".into(),
            ));
        }
        if !(self.rel_err_tol > 0.0) || !(self.stall_tol > 0.0) {
            return Err(Error::Config("altmin tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Row `i` is `vec(A_i W)` (or `vec(A_iᵀ W)`), row-major over the n×r
/// block.
fn design(inst: &Instance, w: MatRef<'_, f64>, transpose: bool) -> Mat<f64> {
    let (n, m, r) = (inst.n(), inst.m(), w.ncols());
    let wr = dense::rows_of(w);
    let mut j = Mat::<f64>::zeros(m, n * r);
    let mut row = vec![0.0; n * r];
    for i in 0..m {
        row.fill(0.0);
        if let Some(p) = inst.ensemble.packed(i) {
            let mut idx = 0;
            for a in 0..n {
                for b in a..n {
                    let v = p[idx];
                    idx += 1;
                    if v == 0.0 {
                        continue;
                    }
                    for l in 0..r {
                        row[a * r + l] += v * wr[b * r + l];
                    }
                    if b != a {
                        for l in 0..r {
                            row[b * r + l] += v * wr[a * r + l];
                        }
                    }
                }
            }
        } else {
            for (a, b, v) in inst.ensemble.triplets(i).unwrap() {
                let (a, b) = if transpose { (b, a) } else { (a, b) };
                let (a, b) = (a as usize, b as usize);
                for l in 0..r {
                    row[a * r + l] += v * wr[b * r + l];
                }
            }
        }
        for (k, &x) in row.iter().enumerate() {
            j[(i, k)] = x;
        }
    }
    j
}

/// Ridge-regularized least squares `argmin_W ‖J vec(W) − b‖² + ρ‖W‖²`.
fn least_squares(j: &Mat<f64>, b: &[f64], n: usize, r: usize, ridge: f64) -> Result<Mat<f64>> {
    let p = j.ncols();
    let mut normal = Mat::<f64>::zeros(p, p);
    matmul(
        normal.as_mut(),
        Accum::Replace,
        j.transpose(),
        j.as_ref(),
        1.0,
        Par::Seq,
    );
    let scale = (0..p).map(|k| normal[(k, k)]).sum::<f64>() / p as f64;
    for k in 0..p {
        normal[(k, k)] += ridge * scale.max(f64::MIN_POSITIVE);
    }
    let rhs_col = MatRef::from_column_major_slice(b, b.len(), 1);
    let mut rhs = Mat::<f64>::zeros(p, 1);
    matmul(
        rhs.as_mut(),
        Accum::Replace,
        j.transpose(),
        rhs_col,
        1.0,
        Par::Seq,
    );
    let chol = normal.llt(Side::Lower).map_err(|_| {
        Error::Numeric(
            "least-squares normal equations are singular; increase ls_regularization".into(),
        )
    })?;
    let sol = chol.solve(&rhs);
    if !(0..p).all(|k| sol[(k, 0)].is_finite()) {
        return Err(Error::Numeric(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(Mat::from_fn(n, r, |a, l| sol[(a * r + l, 0)]))
}

/// `argmin_U ‖𝒜(U Vᵀ) − b‖² + ridge` with `V` fixed.
pub fn altmin_update_u(inst: &Instance, v: MatRef<'_, f64>, ridge: f64) -> Result<Mat<f64>> {
    let j = design(inst, v, false);
    least_squares(&j, &inst.b, inst.n(), v.ncols(), ridge)
}

/// `argmin_V ‖𝒜(U Vᵀ) − b‖² + ridge` with `U` fixed.
pub fn altmin_update_v(inst: &Instance, u: MatRef<'_, f64>, ridge: f64) -> Result<Mat<f64>> {
    let j = design(inst, u, true);
    least_squares(&j, &inst.b, inst.n(), u.ncols(), ridge)
}

/// Starts from the top-r singular factors of `𝒜ᵀ(b)/(2m)` (split as
/// `U √S`, `V √S`), then alternates a `U` solve and a `V` solve per
/// iteration. For a symmetric ensemble the reported estimate is
/// `(U Vᵀ + V Uᵀ)/2`.
pub fn solve_altmin(inst: &Instance, config: &AltMinConfig) -> Result<SolveResult> {
    let (n, r) = (inst.n(), config.r);
    config.validate(n)?;
    let start = Instant::now();
    let scale = 1.0 / (2.0 * inst.m() as f64);
    let w: Vec<f64> = inst.b.iter().map(|b| b * scale).collect();
    let m0 = inst.ensemble.adjoint(&w)?;
    let full = linalg::svd(m0.as_ref())?;
    let root = |f: &Mat<f64>| Mat::from_fn(n, r, |i, j| f[(i, j)] * full.s[j].max(0.0).sqrt());
    let mut u = root(&full.u);
    let mut v = root(&full.v);

    let mut monitor = Monitor::new(
        start,
        config.max_iters,
        config.rel_err_tol,
        Some(config.stall_tol),
    );
    // Symmetric measurements cannot see the skew part of `U Vᵀ`, so the
    // estimate is its symmetric part.
    let symmetric = inst.ensemble.is_symmetric();
    let mut iter = 0;
    loop {
        let mut x = &u * v.transpose();
        if symmetric {
            x = dense::symmetrize(x.as_ref());
        }
        let pred = inst.ensemble.apply_frobenius(x.as_ref())?;
        if let Some(stop) = monitor.observe(iter, observe_dense(inst, x.as_ref(), &pred)) {
            let estimate = if symmetric {
                Estimate::Dense(x)
            } else {
                Estimate::Product { u, v }
            };
            return Ok(monitor.finish("altmin", estimate, stop));
        }
        let sweep = altmin_update_u(inst, v.as_ref(), config.ls_regularization).and_then(|nu| {
            let nv = altmin_update_v(inst, nu.as_ref(), config.ls_regularization)?;
            Ok((nu, nv))
        });
        match sweep {
            Ok((nu, nv)) => {
                u = nu;
                v = nv;
            }
            Err(e) => {
                return Ok(monitor.finish(
                    "altmin",
                    Estimate::Product { u, v },
                    Termination::Failed(format!("ill-conditioned: {e}")),
                ))
            }
        }
        iter += 1;
    }
}
