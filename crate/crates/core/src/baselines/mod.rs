//! Comparison solvers: singular value projection, nuclear-norm
//! minimization by ADMM on the dual, and alternating least squares.
//!
//! These operate on general (not necessarily symmetric) n×n estimates and
//! pair the measurement operator with the Frobenius inner product
//! `⟨A_i, X⟩`, so that `Σ α_i A_i` is its exact adjoint also for the
//! asymmetric sparse ensemble. For symmetric `X` this equals `trace(A_i X)`.

mod admm;
mod altmin;
mod svp;

pub use admm::{solve_nuclear_admm, AdmmConfig, AdmmState, ADMM_MAX_M};
pub use altmin::{altmin_update_u, altmin_update_v, solve_altmin, AltMinConfig};
pub use svp::{solve_svp, SvpConfig};

use faer::MatRef;

use crate::dense;
use crate::measurement::Instance;
use crate::trace::Observation;

/// Monitor inputs for a dense iterate `x` with predictions `pred = 𝒜(x)`.
fn observe_dense(inst: &Instance, x: MatRef<'_, f64>, pred: &[f64]) -> Observation {
    let res: Vec<f64> = pred.iter().zip(&inst.b).map(|(p, b)| p - b).collect();
    Observation {
        f: dense::dot(&res, &res) / (4.0 * inst.m() as f64),
        residual: inst.relative_residual(pred),
        rel_err: inst.truth.as_ref().map(|t| t.rel_error_dense(x)),
        dist: None,
    }
}
