#![allow(dead_code)]

use faer::Mat;
use lowrank_core::rng::{rng_from_seed, Rng};
use lowrank_core::{Instance, MeasurementEnsemble};
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, k: usize, rng: &mut Rng) -> Mat<f64> {
    Mat::from_fn(n, k, |_, _| StandardNormal.sample(rng))
}

pub fn random_symmetric(n: usize, rng: &mut Rng) -> Mat<f64> {
    let g = gaussian(n, n, rng);
    Mat::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]))
}

/// Orthogonal factor of a Gaussian matrix by Gram-Schmidt.
pub fn random_orthogonal(r: usize, seed: u64) -> Mat<f64> {
    let mut rng = rng_from_seed(seed);
    let mut q = gaussian(r, r, &mut rng);
    for j in 0..r {
        for k in 0..j {
            let d: f64 = (0..r).map(|i| q[(i, j)] * q[(i, k)]).sum();
            for i in 0..r {
                q[(i, j)] -= d * q[(i, k)];
            }
        }
        let norm = (0..r).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        for i in 0..r {
            q[(i, j)] /= norm;
        }
    }
    q
}

pub fn max_abs(x: &Mat<f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            out = out.max(x[(i, j)].abs());
        }
    }
    out
}

pub fn frob(x: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            s += x[(i, j)] * x[(i, j)];
        }
    }
    s.sqrt()
}

/// `trace(A X)` by explicit loops.
pub fn naive_trace_product(a: &Mat<f64>, x: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * x[(k, i)];
        }
    }
    s
}

/// `(1/4m) Σ (trace(Zᵀ A_i Z) − b_i)²` from densified measurement matrices.
pub fn naive_objective(mats: &[Mat<f64>], b: &[f64], z: &Mat<f64>) -> f64 {
    let x = z * z.transpose();
    let m = mats.len();
    mats.iter()
        .zip(b)
        .map(|(a, bi)| {
            let r = naive_trace_product(a, &x) - bi;
            r * r
        })
        .sum::<f64>()
        / (4.0 * m as f64)
}

pub fn dense_mats(ens: &MeasurementEnsemble) -> Vec<Mat<f64>> {
    (0..ens.m()).map(|i| ens.matrix(i)).collect()
}

pub fn truth_factor(inst: &Instance) -> &Mat<f64> {
    &inst.truth.as_ref().expect("planted instance").zstar
}
