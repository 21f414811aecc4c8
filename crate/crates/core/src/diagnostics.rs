//! Monte-Carlo checks of the probabilistic facts behind the method:
//! unbiasedness of the mean estimator, concentration of the rank-one
//! measurement average, the GOE sandwich expectation, the local regularity
//! inequality, and a log-linear fit of convergence traces.

use faer::{Mat, MatRef};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::gd;
use crate::linalg;
use crate::measurement::{
    generate_instance, sample_goe, EnsembleKind, Instance, MeasurementEnsemble,
};
use crate::rng::{self, Rng};
use crate::trace::TraceRecord;

/// Per-trial deviations of one statistic over a grid of `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub statistic: String,
    pub n: usize,
    pub r: usize,
    pub trials: usize,
    pub m_grid: Vec<usize>,
    /// `deviations[k][t]` for `m_grid[k]`, trial `t`.
    pub deviations: Vec<Vec<f64>>,
    /// Mean deviation per grid point.
    pub mean: Vec<f64>,
    pub median: f64,
    pub max: f64,
    /// Log-log slope of `mean` against `m`, when the grid has two or more
    /// points.
    pub slope: Option<f64>,
}

impl ConcentrationReport {
    pub fn from_deviations(
        statistic: &str,
        n: usize,
        r: usize,
        m_grid: Vec<usize>,
        deviations: Vec<Vec<f64>>,
    ) -> Self {
        let trials = deviations.first().map_or(0, Vec::len);
        let mean: Vec<f64> = deviations
            .iter()
            .map(|d| d.iter().sum::<f64>() / d.len().max(1) as f64)
            .collect();
        let mut all: Vec<f64> = deviations.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        let slope = (m_grid.len() >= 2).then(|| {
            let xs: Vec<f64> = m_grid.iter().map(|&m| (m as f64).ln()).collect();
            let ys: Vec<f64> = mean.iter().map(|e| e.ln()).collect();
            least_squares_line(&xs, &ys).slope
        });
        Self {
            statistic: statistic.to_owned(),
            n,
            r,
            trials,
            m_grid,
            deviations,
            mean,
            median: median_sorted(&all),
            max: all.last().copied().unwrap_or(0.0),
            slope,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        k if k % 2 == 1 => v[k / 2],
        k => 0.5 * (v[k / 2 - 1] + v[k / 2]),
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: Option<f64>,
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = (syy > 0.0).then(|| 1.0 - sse / syy);
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

/// `‖M/2 − X★‖_F / ‖X★‖_F` with `M = (1/m) Σ b_i A_i` over fresh GOE
/// instances. Trial `t` at grid index `k` uses seed `derive(seed, [k, t])`.
pub fn check_mean_estimator(
    n: usize,
    r: usize,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if m_grid.is_empty() || trials == 0 {
        return Err(Error::Config(
            "mean-estimator check needs a nonempty grid and trials ≥ 1".into(),
        ));
    }
    let deviations = m_grid
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let inst = generate_instance(
                        n,
                        r,
                        m,
                        EnsembleKind::Goe,
                        rng::derive_seed(seed, &[k as u64, t as u64]),
                    )?;
                    mean_estimator_error(&inst)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationReport::from_deviations(
        "mean_estimator",
        n,
        r,
        m_grid.to_vec(),
        deviations,
    ))
}

/// `‖M/2 − X★‖_F / ‖X★‖_F` for one instance.
pub fn mean_estimator_error(inst: &Instance) -> Result<f64> {
    let truth = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("instance has no ground truth".into()))?;
    let half = 0.5 * gd::mean_estimator(inst)?;
    Ok(truth.rel_error_dense(half.as_ref()))
}

/// Operator norm of `(1/m) Σ (uᵀA_i u) A_i − 2uuᵀ` for a given ensemble.
pub fn a1_deviation(ensemble: &MeasurementEnsemble, u: &[f64]) -> Result<f64> {
    let n = ensemble.n();
    if u.len() != n {
        return Err(Error::Shape(format!(
            "vector has length {}, expected {n}",
            u.len()
        )));
    }
    let col = MatRef::from_column_major_slice(u, n, 1);
    let m = ensemble.m() as f64;
    let coeffs: Vec<f64> = ensemble
        .quad_forms(col)?
        .into_iter()
        .map(|q| q / m)
        .collect();
    let mut dev = ensemble.adjoint(&coeffs)?;
    for i in 0..n {
        for j in 0..n {
            dev[(i, j)] -= 2.0 * u[i] * u[j];
        }
    }
    if dense::frobenius(dev.as_ref()) == 0.0 {
        return Ok(0.0);
    }
    linalg::symmetric_operator_norm(dev.as_ref())
}

/// [`a1_deviation`] over a fresh GOE ensemble drawn from `seed`. The
/// comparison against `δ/r` is left to the caller.
pub fn check_a1(n: usize, m: usize, u: &[f64], seed: u64) -> Result<f64> {
    let ens = MeasurementEnsemble::goe(n, m, seed)?;
    a1_deviation(&ens, u)
}

/// [`check_a1`] over `trials` independent ensembles per grid point, with
/// `u = e₁`. Trial `t` at grid index `k` uses seed `derive(seed, [k, t])`.
pub fn check_a1_trials(
    n: usize,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if m_grid.is_empty() || trials == 0 || n == 0 {
        return Err(Error::Config(
            "a1 check needs n ≥ 1, a nonempty grid and trials ≥ 1".into(),
        ));
    }
    let mut u = vec![0.0; n];
    u[0] = 1.0;
    let deviations = m_grid
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            (0..trials)
                .into_par_iter()
                .map(|t| check_a1(n, m, &u, rng::derive_seed(seed, &[k as u64, t as u64])))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationReport::from_deviations(
        "a1",
        n,
        1,
        m_grid.to_vec(),
        deviations,
    ))
}

/// Result of [`check_hessian_expectation`].
#[derive(Debug, Clone)]
pub struct SandwichCheck {
    /// `(1/m) Σ A_i x yᵀ A_i`.
    pub empirical: Mat<f64>,
    /// `xᵀy I + y xᵀ`.
    pub expected: Mat<f64>,
    /// Operator norm of the difference.
    pub deviation: f64,
}

/// Compares `(1/m) Σ A_i x yᵀ A_i` over `m` GOE draws with its expectation
/// `xᵀy I + y xᵀ`.
pub fn check_hessian_expectation(
    x: &[f64],
    y: &[f64],
    m: usize,
    seed: u64,
) -> Result<SandwichCheck> {
    let n = x.len();
    if y.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "vectors have lengths {} and {}",
            n,
            y.len()
        )));
    }
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let xm = MatRef::from_column_major_slice(x, n, 1);
    let ym = MatRef::from_column_major_slice(y, n, 1);
    let mut rng = rng::rng_from_seed(seed);
    let mut empirical = Mat::<f64>::zeros(n, n);
    for _ in 0..m {
        let a = sample_goe(n, &mut rng)?;
        let ax = &a * xm;
        let ay = &a * ym;
        for i in 0..n {
            for j in 0..n {
                empirical[(i, j)] += ax[(i, 0)] * ay[(j, 0)];
            }
        }
    }
    empirical = (1.0 / m as f64) * &empirical;
    let xy = dense::dot(x, y);
    let expected = Mat::from_fn(n, n, |i, j| if i == j { xy } else { 0.0 } + y[i] * x[j]);
    let diff = &empirical - &expected;
    let deviation = if dense::frobenius(diff.as_ref()) == 0.0 {
        0.0
    } else {
        linalg::operator_norm(diff.as_ref())?
    };
    Ok(SandwichCheck {
        empirical,
        expected,
        deviation,
    })
}

/// `⟨∇f(Z), Z − Z̄⟩ − (σ_r/α)‖Z − Z̄‖² − ‖∇f(Z)‖²/(β‖Z★‖²)` with `Z̄` the
/// point of the orbit `Z★U` closest to `Z`. Nonnegative means the
/// inequality holds at `Z`.
pub fn check_regularity(inst: &Instance, z: MatRef<'_, f64>, alpha: f64, beta: f64) -> Result<f64> {
    let truth = inst.truth.as_ref().ok_or_else(|| {
        Error::Config("regularity check needs an instance with ground truth".into())
    })?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Config("alpha and beta must be positive".into()));
    }
    let align = linalg::procrustes_align(z, truth.zstar.as_ref())?;
    let zbar = &truth.zstar * &align.rotation;
    let h = z.to_owned() - &zbar;
    let g = gd::gradient(z, inst)?;
    let lhs = dense::inner(g.as_ref(), h.as_ref());
    let hn = dense::frobenius(h.as_ref());
    let gn = dense::frobenius(g.as_ref());
    let rhs = truth.sigma_min() / alpha * hn * hn + gn * gn / (beta * truth.factor_norm_sq());
    Ok(lhs - rhs)
}

/// `Z★ + H` with `H` uniform in the Frobenius ball of the given radius.
pub fn sample_in_ball(zstar: MatRef<'_, f64>, radius: f64, rng: &mut Rng) -> Mat<f64> {
    let (n, r) = (zstar.nrows(), zstar.ncols());
    let dir = Mat::from_fn(n, r, |_, _| -> f64 { StandardNormal.sample(rng) });
    let norm = dense::frobenius(dir.as_ref());
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / (n * r) as f64) / norm;
    Mat::from_fn(n, r, |i, j| zstar[(i, j)] + scale * dir[(i, j)])
}

/// Regularity margins at points sampled around the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub radius: f64,
    pub margins: Vec<f64>,
    /// Share of margins that are nonnegative.
    pub satisfied: f64,
}

/// Evaluates [`check_regularity`] at `samples` points drawn by
/// [`sample_in_ball`] with radius `√(3σ_r/16)`.
pub fn regularity_spot_check(
    inst: &Instance,
    samples: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<RegularityReport> {
    let truth = inst.truth.as_ref().ok_or_else(|| {
        Error::Config("regularity check needs an instance with ground truth".into())
    })?;
    let radius = (3.0 * truth.sigma_min() / 16.0).sqrt();
    let margins = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::child_rng(seed, &[k as u64]);
            let z = sample_in_ball(truth.zstar.as_ref(), radius, &mut rng);
            check_regularity(inst, z.as_ref(), alpha, beta)
        })
        .collect::<Result<Vec<f64>>>()?;
    let ok = margins.iter().filter(|&&v| v >= 0.0).count();
    Ok(RegularityReport {
        n: inst.n(),
        r: truth.rank(),
        m: inst.m(),
        alpha,
        beta,
        radius,
        satisfied: ok as f64 / samples.max(1) as f64,
        margins,
    })
}

/// Least-squares fit of `log₁₀ dist` against the iteration index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    /// Reported as 0 when the fitted values have no variance.
    pub r_squared: f64,
    pub degenerate: bool,
    pub points: usize,
}

impl RateEstimate {
    /// Per-iteration contraction factor `10^slope`.
    pub fn contraction(&self) -> f64 {
        10f64.powf(self.slope)
    }
}

pub const MIN_RATE_POINTS: usize = 20;

/// Fits the middle 80% of the records carrying a positive distance.
pub fn estimate_rate(trace: &[TraceRecord]) -> Result<RateEstimate> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter_map(|t| {
            t.dist
                .filter(|d| *d > 0.0 && d.is_finite())
                .map(|d| (t.iter as f64, d.log10()))
        })
        .collect();
    if pts.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points with a positive distance, need {MIN_RATE_POINTS}",
            pts.len()
        )));
    }
    let cut = pts.len() / 10;
    let mid = &pts[cut..pts.len() - cut];
    let xs: Vec<f64> = mid.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = mid.iter().map(|p| p.1).collect();
    let fit = least_squares_line(&xs, &ys);
    Ok(RateEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared.unwrap_or(0.0),
        degenerate: fit.r_squared.is_none(),
        points: mid.len(),
    })
}
