use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{Llt, Solve};
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use super::observe_dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Instance;
use crate::trace::{Estimate, Monitor, SolveResult};

/// Largest `m` for which the m×m system `λI + η Â Âᵀ` is formed.
pub const ADMM_MAX_M: usize = 20_000;

/// ADMM on the dual of `min (1/2λ)‖𝒜(X) − b‖² + ‖X‖_*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub rel_err_tol: f64,
    pub max_m: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-5,
            eta: 100.0,
            max_iters: 100_000,
            rel_err_tol: 1e-5,
            max_m: ADMM_MAX_M,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "admm lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "admm eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.rel_err_tol > 0.0) {
            return Err(Error::Config("admm rel_err_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Iterates of the condensed two-step scheme
///
/// ```text
/// α ← (λI + η Â Âᵀ)⁻¹ (b + 𝒜(η 𝒜ᵀ(α) + X_prev − 2X))
/// X ← prox_η(η 𝒜ᵀ(α) + X)
/// ```
///
/// started from `α = 0`, `X = X_prev = 0`. The dual matrix variable is not
/// stored; [`dual`](Self::dual) reconstructs it.
pub struct AdmmState<'a> {
    inst: &'a Instance,
    lambda: f64,
    eta: f64,
    chol: Llt<f64>,
    alpha: Vec<f64>,
    /// `Â Âᵀ α`.
    gram_alpha: Vec<f64>,
    /// `𝒜ᵀ(α)` for the current `α`.
    adj_alpha: Mat<f64>,
    x: Mat<f64>,
    x_prev: Mat<f64>,
    pred: Vec<f64>,
    pred_prev: Vec<f64>,
}

impl<'a> AdmmState<'a> {
    /// Forms and factors `λI + η Â Âᵀ`.
    pub fn new(inst: &'a Instance, config: &AdmmConfig) -> Result<Self> {
        config.validate()?;
        let (n, m) = (inst.n(), inst.m());
        if m > config.max_m {
            return Err(Error::Config(format!(
                "admm needs an m×m factorization; m = {m} exceeds the cap {}",
                config.max_m
            )));
        }
        let mut k = inst.ensemble.gram();
        for i in 0..m {
            for j in 0..m {
                k[(i, j)] *= config.eta;
            }
            k[(i, i)] += config.lambda;
        }
        let chol = k.llt(Side::Lower).map_err(|_| Error::SingularGram {
            lambda: config.lambda,
        })?;
        drop(k);
        Ok(Self {
            inst,
            lambda: config.lambda,
            eta: config.eta,
            chol,
            alpha: vec![0.0; m],
            gram_alpha: vec![0.0; m],
            adj_alpha: Mat::zeros(n, n),
            x: Mat::zeros(n, n),
            x_prev: Mat::zeros(n, n),
            pred: vec![0.0; m],
            pred_prev: vec![0.0; m],
        })
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `𝒜(X)` for the current primal estimate.
    pub fn predictions(&self) -> &[f64] {
        &self.pred
    }

    /// `V = 𝒜ᵀ(α) + (X_prev − X)/η`, the spectral-ball variable.
    pub fn dual(&self) -> Mat<f64> {
        Mat::from_fn(self.x.nrows(), self.x.ncols(), |i, j| {
            self.adj_alpha[(i, j)] + (self.x_prev[(i, j)] - self.x[(i, j)]) / self.eta
        })
    }

    /// `Â Âᵀ v` through the factor: `(L Lᵀ v − λ v) / η`.
    fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let l = self.chol.L();
        let col = MatRef::from_column_major_slice(v, m, 1);
        let mut t = Mat::<f64>::zeros(m, 1);
        matmul(
            t.as_mut(),
            Accum::Replace,
            l.transpose(),
            col,
            1.0,
            Par::Seq,
        );
        let mut u = Mat::<f64>::zeros(m, 1);
        matmul(u.as_mut(), Accum::Replace, l, t.as_ref(), 1.0, Par::Seq);
        (0..m)
            .map(|i| (u[(i, 0)] - self.lambda * v[i]) / self.eta)
            .collect()
    }

    pub fn step(&mut self) -> Result<()> {
        let m = self.alpha.len();
        let rhs = Mat::from_fn(m, 1, |i, _| {
            self.inst.b[i] + self.eta * self.gram_alpha[i] + self.pred_prev[i] - 2.0 * self.pred[i]
        });
        let sol = self.chol.solve(&rhs);
        self.alpha = (0..m).map(|i| sol[(i, 0)]).collect();
        self.gram_alpha = self.gram_apply(&self.alpha);
        self.adj_alpha = self.inst.ensemble.adjoint(&self.alpha)?;
        let y = self.eta * &self.adj_alpha + &self.x;
        let next = linalg::svt_prox(y.as_ref(), self.eta)?;
        self.x_prev = std::mem::replace(&mut self.x, next);
        let pred = self.inst.ensemble.apply_frobenius(self.x.as_ref())?;
        self.pred_prev = std::mem::replace(&mut self.pred, pred);
        Ok(())
    }
}

pub fn solve_nuclear_admm(inst: &Instance, config: &AdmmConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let mut state = AdmmState::new(inst, config)?;
    let mut monitor = Monitor::new(start, config.max_iters, config.rel_err_tol, None);
    let mut iter = 0;
    loop {
        let obs = observe_dense(inst, state.x(), state.predictions());
        if let Some(stop) = monitor.observe(iter, obs) {
            return Ok(monitor.finish("admm", Estimate::Dense(state.x), stop));
        }
        if let Err(e) = state.step() {
            let x = state.x.clone();
            return Ok(monitor.finish(
                "admm",
                Estimate::Dense(x),
                crate::trace::Termination::Failed(e.to_string()),
            ));
        }
        iter += 1;
    }
}
