use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::observe_dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::Instance;
use crate::rng;
use crate::trace::{Estimate, Monitor, SolveResult};

/// `X ← P_r(X − step · 𝒜ᵀ(𝒜(X) − b))` from `X = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvpConfig {
    pub step: f64,
    pub r: usize,
    pub max_iters: usize,
    pub rel_err_tol: f64,
    pub stall_tol: f64,
    /// Seeds the randomized SVD sketches.
    pub seed: u64,
}

impl Default for SvpConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            r: 1,
            max_iters: 100_000,
            rel_err_tol: 1e-5,
            stall_tol: 1e-12,
            seed: 0,
        }
    }
}

impl SvpConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!(
                "svp step must be positive, got {}",
                self.step
            )));
        }
        if self.r == 0 || self.r > n {
            return Err(Error::InvalidRank { rank: self.r, n });
        }
        if !(self.rel_err_tol > 0.0) || !(self.stall_tol > 0.0) {
            return Err(Error::Config("svp tolerances must be positive".into()));
        }
        Ok(())
    }
}

pub fn solve_svp(inst: &Instance, config: &SvpConfig) -> Result<SolveResult> {
    let n = inst.n();
    config.validate(n)?;
    let start = Instant::now();
    let mut sketch_rng = rng::rng_from_seed(config.seed);
    let mut monitor = Monitor::new(
        start,
        config.max_iters,
        config.rel_err_tol,
        Some(config.stall_tol),
    );
    let mut x = Mat::<f64>::zeros(n, n);
    let mut factors = None;
    let mut iter = 0;
    loop {
        let pred = inst.ensemble.apply_frobenius(x.as_ref())?;
        if let Some(stop) = monitor.observe(iter, observe_dense(inst, x.as_ref(), &pred)) {
            let estimate = match factors {
                Some(f) => Estimate::LowRank(f),
                None => Estimate::Dense(x),
            };
            return Ok(monitor.finish("svp", estimate, stop));
        }
        let res: Vec<f64> = pred.iter().zip(&inst.b).map(|(p, b)| p - b).collect();
        let g = inst.ensemble.adjoint(&res)?;
        let mut y = &x - config.step * &g;
        if inst.ensemble.is_symmetric() {
            // The skew part is invisible to symmetric measurements; keep it at zero.
            y = crate::dense::symmetrize(y.as_ref());
        }
        if !crate::dense::is_finite(y.as_ref()) {
            // Let the monitor classify the blow-up on the next pass.
            x = y;
            factors = None;
        } else {
            let f = linalg::best_rank_r_factors(y.as_ref(), config.r, &mut sketch_rng)?;
            x = f.to_dense();
            factors = Some(f);
        }
        iter += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use crate::measurement::{generate_instance, EnsembleKind};

    #[test]
    fn first_step_is_truncated_adjoint() {
        let inst = generate_instance(10, 1, 40, EnsembleKind::Goe, 4).unwrap();
        let cfg = SvpConfig {
            step: 1e-2,
            r: 1,
            max_iters: 1,
            ..SvpConfig::default()
        };
        let res = solve_svp(&inst, &cfg).unwrap();
        let x1 = res.estimate.to_dense();
        let ata = inst.ensemble.adjoint(&inst.b).unwrap();
        let expected =
            linalg::best_rank_r((1e-2 * &ata).as_ref(), 1, &mut rng::rng_from_seed(0)).unwrap();
        let diff = dense::frobenius((&x1 - &expected).as_ref());
        assert!(diff <= 1e-12 * dense::frobenius(expected.as_ref()));
    }

    #[test]
    fn recovers_small_dense_instance() {
        let inst = generate_instance(20, 1, 160, EnsembleKind::Goe, 9).unwrap();
        let cfg = SvpConfig {
            step: 1.0 / (2.0 * 160.0 * 2.0),
            r: 1,
            ..SvpConfig::default()
        };
        let res = solve_svp(&inst, &cfg).unwrap();
        assert!(res.converged(), "{}", res.termination);
        assert!(res.relative_residual(&inst).unwrap() < 1e-4);
    }
}
