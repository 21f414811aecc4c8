//! Low-rank positive-semidefinite matrix recovery from random linear
//! measurements.
//!
//! The centerpiece is factored gradient descent ([`gd`]): parameterize the
//! unknown PSD matrix as `X = Z Zᵀ`, initialize `Z` spectrally from
//! `(1/m) Σ b_i A_i`, and run constant-step gradient descent on the squared
//! measurement residual. Around it sit the measurement model
//! ([`measurement`]), dense kernels ([`linalg`]), three comparison solvers
//! ([`baselines`]), a bridge from positive-definite-cost SDPs ([`sdp`]),
//! Monte-Carlo diagnostics ([`diagnostics`]) and an experiment harness
//! ([`harness`]).

pub mod baselines;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod gd;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod sdp;
pub mod trace;

pub use error::{Error, Result};
pub use measurement::{
    generate_instance, EnsembleKind, GroundTruth, Instance, MeasurementEnsemble,
};
