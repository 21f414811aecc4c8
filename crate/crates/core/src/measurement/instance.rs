use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};

use super::ensemble::{EnsembleKind, MeasurementEnsemble};
use crate::dense;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Planted solution `X★ = Z★ Z★ᵀ` and its spectrum, computed once.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// n×r factor as drawn (columns i.i.d. standard normal for generated
    /// instances).
    pub zstar: Mat<f64>,
    /// Nonzero eigenvalues of `X★`, nonincreasing.
    pub sigma: Vec<f64>,
    /// Matching orthonormal eigenvectors (n×r).
    pub eigvecs: Mat<f64>,
    /// `σ_1 / σ_r`.
    pub kappa: f64,
    /// `‖X★‖_F`.
    pub xstar_norm: f64,
}

impl GroundTruth {
    /// Spectrum of `Z Zᵀ` through the r×r Gram matrix `ZᵀZ`.
    pub fn from_factor(zstar: Mat<f64>) -> Result<Self> {
        let r = zstar.ncols();
        if r == 0 || r > zstar.nrows() {
            return Err(Error::InvalidRank {
                rank: r,
                n: zstar.nrows(),
            });
        }
        let gram = zstar.transpose() * &zstar;
        let pairs = linalg::top_r_eigenpairs(gram.as_ref(), r, 1e-9)?;
        let sigma = pairs.values.clone();
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Numeric("planted factor is rank deficient".into()));
        }
        let mut eigvecs = &zstar * &pairs.vectors;
        for (j, s) in sigma.iter().enumerate() {
            let scale = s.sqrt();
            for i in 0..eigvecs.nrows() {
                eigvecs[(i, j)] /= scale;
            }
        }
        Ok(Self {
            kappa: sigma[0] / sigma[r - 1],
            xstar_norm: sigma.iter().map(|s| s * s).sum::<f64>().sqrt(),
            zstar,
            sigma,
            eigvecs,
        })
    }

    pub fn rank(&self) -> usize {
        self.zstar.ncols()
    }

    pub fn sigma_min(&self) -> f64 {
        *self.sigma.last().unwrap()
    }

    /// `X★` as a dense matrix.
    pub fn xstar(&self) -> Mat<f64> {
        &self.zstar * self.zstar.transpose()
    }

    /// `‖Z★‖²_F = trace(X★)`.
    pub fn factor_norm_sq(&self) -> f64 {
        self.sigma.iter().sum()
    }

    /// `‖Z Zᵀ − X★‖_F / ‖X★‖_F` for a factor `Z` of any width.
    pub fn rel_error_factor(&self, z: MatRef<'_, f64>) -> f64 {
        dense::factored_distance(z, self.zstar.as_ref()) / self.xstar_norm
    }

    /// `‖X − X★‖_F / ‖X★‖_F` for a dense estimate.
    pub fn rel_error_dense(&self, x: MatRef<'_, f64>) -> f64 {
        let d = x.to_owned() - &self.zstar * self.zstar.transpose();
        dense::frobenius(d.as_ref()) / self.xstar_norm
    }

    /// `d(Z, Z★)`.
    pub fn distance(&self, z: MatRef<'_, f64>) -> Result<f64> {
        linalg::procrustes_distance(z, self.zstar.as_ref())
    }
}

/// Measurements, observations and (optionally) the planted solution.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ensemble: MeasurementEnsemble,
    pub b: Vec<f64>,
    pub truth: Option<GroundTruth>,
    /// Seed the instance was generated from, when known.
    pub seed: Option<u64>,
}

impl Instance {
    pub fn new(ensemble: MeasurementEnsemble, b: Vec<f64>) -> Result<Self> {
        if b.len() != ensemble.m() {
            return Err(Error::Shape(format!(
                "observation vector has length {}, expected m = {}",
                b.len(),
                ensemble.m()
            )));
        }
        Ok(Self {
            ensemble,
            b,
            truth: None,
            seed: None,
        })
    }

    /// Instance whose observations are `𝒜(Z★ Z★ᵀ)`.
    pub fn planted(ensemble: MeasurementEnsemble, zstar: Mat<f64>) -> Result<Self> {
        if zstar.nrows() != ensemble.n() {
            return Err(Error::Shape(format!(
                "planted factor has {} rows, expected {}",
                zstar.nrows(),
                ensemble.n()
            )));
        }
        let b = ensemble.quad_forms(zstar.as_ref())?;
        Ok(Self {
            ensemble,
            b,
            truth: Some(GroundTruth::from_factor(zstar)?),
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    pub fn m(&self) -> usize {
        self.ensemble.m()
    }

    /// Rank of the planted solution, if any.
    pub fn rank(&self) -> Option<usize> {
        self.truth.as_ref().map(GroundTruth::rank)
    }

    pub fn b_norm(&self) -> f64 {
        dense::norm2(&self.b)
    }

    /// `‖v − b‖ / ‖b‖` for a vector of predicted measurements.
    pub fn relative_residual(&self, predicted: &[f64]) -> f64 {
        let num: f64 = predicted
            .iter()
            .zip(&self.b)
            .map(|(p, b)| (p - b) * (p - b))
            .sum::<f64>()
            .sqrt();
        num / self.b_norm().max(f64::MIN_POSITIVE)
    }

    /// Same ensemble and observations with `Z★` replaced by `Z★ U`, which
    /// leaves `X★` unchanged for orthogonal `U`.
    pub fn with_rotated_truth(&self, u: MatRef<'_, f64>) -> Result<Self> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| Error::Config("instance has no ground truth".into()))?;
        let mut out = self.clone();
        out.truth = Some(GroundTruth::from_factor(&truth.zstar * u)?);
        Ok(out)
    }
}

/// Draws `Z★` with i.i.d. standard-normal entries, a fresh ensemble, and
/// sets `b = 𝒜(Z★ Z★ᵀ)`. Identical arguments give identical instances.
pub fn generate_instance(
    n: usize,
    r: usize,
    m: usize,
    kind: EnsembleKind,
    seed: u64,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    if r == 0 || r > n {
        return Err(Error::InvalidRank { rank: r, n });
    }
    let mut factor_rng = rng::child_rng(seed, &[0]);
    let zstar = Mat::from_fn(n, r, |_, _| StandardNormal.sample(&mut factor_rng));
    let ensemble_seed = rng::derive_seed(seed, &[1]);
    let ensemble = match kind {
        EnsembleKind::Goe => MeasurementEnsemble::goe(n, m, ensemble_seed)?,
        EnsembleKind::Bernoulli { rho } => {
            MeasurementEnsemble::bernoulli(n, m, rho, ensemble_seed)?
        }
        EnsembleKind::Explicit => {
            return Err(Error::Config(
                "explicit ensembles cannot be generated; build them from matrices".into(),
            ))
        }
    };
    let mut inst = Instance::planted(ensemble, zstar)?;
    inst.seed = Some(seed);
    Ok(inst)
}
