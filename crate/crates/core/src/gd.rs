//! Factored gradient descent.
//!
//! Minimizes `f(Z) = (1/4m) Σ (trace(Zᵀ A_i Z) − b_i)²` over n×r factors
//! from a spectral starting point, with the constant step
//! `μ / (Σ_s |λ_s| / 2)` built from the initialization eigenvalues.

use std::time::Instant;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Instance;
use crate::trace::{Estimate, Monitor, Observation, SolveResult, Termination};

/// An n×r factor `Z` standing for `X = Z Zᵀ`.
pub type FactorMatrix = Mat<f64>;

/// Residual tolerance (relative to `‖M‖_F`) for the initialization
/// eigenpairs.
const INIT_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub mu: f64,
    pub max_iters: usize,
    pub rel_err_tol: f64,
    /// Smallest objective decrease over 100 iterations before the run is
    /// declared stalled.
    pub stall_tol: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            mu: 0.8,
            max_iters: 100_000,
            rel_err_tol: 1e-5,
            stall_tol: 1e-12,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.rel_err_tol > 0.0) {
            return Err(Error::Config(format!(
                "rel_err_tol must be positive, got {}",
                self.rel_err_tol
            )));
        }
        if !(self.stall_tol > 0.0) {
            return Err(Error::Config(format!(
                "stall_tol must be positive, got {}",
                self.stall_tol
            )));
        }
        Ok(())
    }
}

/// Starting factor and the eigenvalues it was built from.
#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub z0: FactorMatrix,
    /// Ordered by decreasing `|λ|`.
    pub lambdas: Vec<f64>,
}

impl SpectralInit {
    /// `μ / (Σ_s |λ_s| / 2)`.
    pub fn step_size(&self, mu: f64) -> Result<f64> {
        step_size(mu, &self.lambdas)
    }
}

pub fn step_size(mu: f64, lambdas: &[f64]) -> Result<f64> {
    let scale: f64 = lambdas.iter().map(|l| l.abs()).sum::<f64>() / 2.0;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Numeric(
            "spectral initialization is zero; observations carry no signal".into(),
        ));
    }
    Ok(mu / scale)
}

fn check_factor(z: MatRef<'_, f64>, inst: &Instance) -> Result<()> {
    if z.nrows() != inst.n() || z.ncols() == 0 {
        return Err(Error::Shape(format!(
            "factor is {}x{}, expected {} rows and at least one column",
            z.nrows(),
            z.ncols(),
            inst.n()
        )));
    }
    Ok(())
}

/// `trace(Zᵀ A_i Z) − b_i`.
fn residuals(z: MatRef<'_, f64>, inst: &Instance) -> Result<Vec<f64>> {
    let mut q = inst.ensemble.quad_forms(z)?;
    for (qi, bi) in q.iter_mut().zip(&inst.b) {
        *qi -= bi;
    }
    Ok(q)
}

fn objective_of(res: &[f64]) -> f64 {
    let s = dense::dot(res, res);
    s / (4.0 * res.len() as f64)
}

fn gradient_of(z: MatRef<'_, f64>, res: &[f64], inst: &Instance) -> Result<Mat<f64>> {
    let inv_m = 1.0 / inst.m() as f64;
    let c: Vec<f64> = res.iter().map(|r| r * inv_m).collect();
    inst.ensemble.symmetric_action(&c, z)
}

/// `f(Z) = (1/4m) Σ (trace(Zᵀ A_i Z) − b_i)²`.
pub fn objective(z: MatRef<'_, f64>, inst: &Instance) -> Result<f64> {
    check_factor(z, inst)?;
    Ok(objective_of(&residuals(z, inst)?))
}

/// `∇f(Z) = (1/m) Σ (trace(Zᵀ A_i Z) − b_i) · ½(A_i + A_iᵀ) Z`.
pub fn gradient(z: MatRef<'_, f64>, inst: &Instance) -> Result<Mat<f64>> {
    check_factor(z, inst)?;
    let res = residuals(z, inst)?;
    gradient_of(z, &res, inst)
}

/// Columns `√(|λ_s|/2) v_s` from the top-`r` eigenpairs of `m`.
pub fn spectral_factor(m: MatRef<'_, f64>, r: usize) -> Result<SpectralInit> {
    let pairs = linalg::top_r_eigenpairs(m, r, INIT_EIG_TOL)?;
    let mut z0 = pairs.vectors;
    for (j, l) in pairs.values.iter().enumerate() {
        let scale = (l.abs() / 2.0).sqrt();
        for i in 0..z0.nrows() {
            z0[(i, j)] *= scale;
        }
    }
    Ok(SpectralInit {
        z0,
        lambdas: pairs.values,
    })
}

/// `M = (1/m) Σ b_i A_i`.
pub fn mean_estimator(inst: &Instance) -> Result<Mat<f64>> {
    let inv_m = 1.0 / inst.m() as f64;
    let w: Vec<f64> = inst.b.iter().map(|b| b * inv_m).collect();
    inst.ensemble.adjoint(&w)
}

pub fn spectral_init(inst: &Instance, r: usize) -> Result<SpectralInit> {
    if r == 0 || r > inst.n() {
        return Err(Error::InvalidRank {
            rank: r,
            n: inst.n(),
        });
    }
    spectral_factor(mean_estimator(inst)?.as_ref(), r)
}

/// Spectral initialization followed by constant-step gradient descent.
pub fn solve_gd(inst: &Instance, r: usize, config: &GdConfig) -> Result<SolveResult> {
    config.validate()?;
    let start = Instant::now();
    let init = spectral_init(inst, r)?;
    let step = init.step_size(config.mu)?;
    run(inst, init.z0, step, config, start)
}

/// Gradient descent from a given factor with a given step.
pub fn solve_gd_from(
    inst: &Instance,
    z0: FactorMatrix,
    step: f64,
    config: &GdConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_factor(z0.as_ref(), inst)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    run(inst, z0, step, config, Instant::now())
}

fn run(
    inst: &Instance,
    mut z: FactorMatrix,
    step: f64,
    config: &GdConfig,
    start: Instant,
) -> Result<SolveResult> {
    let truth = inst.truth.as_ref();
    let mut monitor = Monitor::new(
        start,
        config.max_iters,
        config.rel_err_tol,
        Some(config.stall_tol),
    );
    let b_norm = inst.b_norm().max(f64::MIN_POSITIVE);
    let mut iter = 0;
    loop {
        let res = residuals(z.as_ref(), inst)?;
        let obs = Observation {
            f: objective_of(&res),
            residual: dense::norm2(&res) / b_norm,
            rel_err: truth.map(|t| t.rel_error_factor(z.as_ref())),
            dist: match truth {
                Some(t) if dense::is_finite(z.as_ref()) => Some(t.distance(z.as_ref())?),
                Some(_) => Some(f64::NAN),
                None => None,
            },
        };
        if let Some(stop) = monitor.observe(iter, obs) {
            return Ok(monitor.finish("gd", Estimate::Factor(z), stop));
        }
        let g = gradient_of(z.as_ref(), &res, inst)?;
        z -= step * &g;
        iter += 1;
    }
}

/// Outcome of [`solve_gd_continuation`].
#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub result: SolveResult,
    pub rank: usize,
    /// Termination of each stage, rank 1 first.
    pub stages: Vec<Termination>,
}

/// Rank continuation for an unknown rank: solve at rank 1, and while the
/// relative residual exceeds `rel_err_tol` append the next spectral column
/// to the current factor and solve again, up to `max_rank`.
pub fn solve_gd_continuation(
    inst: &Instance,
    max_rank: usize,
    config: &GdConfig,
) -> Result<ContinuationResult> {
    config.validate()?;
    if max_rank == 0 || max_rank > inst.n() {
        return Err(Error::InvalidRank {
            rank: max_rank,
            n: inst.n(),
        });
    }
    let all = spectral_init(inst, max_rank)?;
    let n = inst.n();
    let mut z = all.z0.subcols(0, 1).to_owned();
    let mut stages = Vec::new();
    for r in 1..=max_rank {
        let step = step_size(config.mu, &all.lambdas[..r])?;
        let result = solve_gd_from(inst, z, step, config)?;
        stages.push(result.termination.clone());
        if r == max_rank || result.relative_residual(inst)? < config.rel_err_tol {
            return Ok(ContinuationResult {
                result,
                rank: r,
                stages,
            });
        }
        let prev = result.estimate.factor().expect("gd returns a factor");
        z = Mat::from_fn(
            n,
            r + 1,
            |i, j| if j < r { prev[(i, j)] } else { all.z0[(i, r)] },
        );
    }
    unreachable!("loop returns at max_rank")
}
