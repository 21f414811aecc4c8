//! Random measurement ensembles, planted instances and the affine operator
//! `𝒜(X)_i = trace(A_i X)` with its adjoint `𝒜ᵀ(α) = Σ α_i A_i`.
//!
//! Two storage layouts are supported. GOE (and any explicit symmetric)
//! ensembles keep each `A_i` as a packed upper triangle, which halves memory
//! and turns every `trace(A_i X)` into one contiguous dot product. Sparse
//! Bernoulli ensembles keep coordinate lists and never touch zeros. Sparse
//! matrices are not symmetrized; `trace(A_i X)` stays well defined and the
//! gradient kernels use the symmetric part `(A_i + A_iᵀ)/2`.

mod ensemble;
mod instance;
pub mod io;

pub use ensemble::{sample_bernoulli, sample_goe, EnsembleKind, MeasurementEnsemble};
pub use instance::{generate_instance, GroundTruth, Instance};

use faer::{Mat, MatRef};

use crate::error::Result;

/// `𝒜(X)`.
pub fn apply_operator(ensemble: &MeasurementEnsemble, x: MatRef<'_, f64>) -> Result<Vec<f64>> {
    ensemble.apply(x)
}

/// `𝒜ᵀ(α)`.
pub fn apply_adjoint(ensemble: &MeasurementEnsemble, alpha: &[f64]) -> Result<Mat<f64>> {
    ensemble.adjoint(alpha)
}
