//! Iteration traces, termination bookkeeping and the result type shared by
//! every solver.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::time::Instant;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::LowRankSvd;
use crate::measurement::{GroundTruth, Instance, MeasurementEnsemble};

/// Every iteration is recorded up to this index, then every
/// [`SPARSE_RECORD_STRIDE`]-th.
pub const DENSE_RECORD_LIMIT: usize = 10_000;
pub const SPARSE_RECORD_STRIDE: usize = 10;
/// Iterations over which the objective decrease is measured for stall
/// detection.
pub const STALL_WINDOW: usize = 100;
/// Objective growth factor (relative to the first iterate) treated as
/// divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// One row of the trace CSV (`iter,f,rel_err,dist,seconds`). Metrics that
/// need the ground truth are empty when it is unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub f: f64,
    pub rel_err: Option<f64>,
    pub dist: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Stalled,
    Diverged,
    /// The solver could not continue (e.g. a singular least-squares system).
    Failed(String),
}

impl Termination {
    pub fn label(&self) -> &str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::Stalled => "stalled",
            Termination::Diverged => "diverged",
            Termination::Failed(_) => "failed",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Failed(why) => write!(f, "failed: {why}"),
            other => f.write_str(other.label()),
        }
    }
}

/// Final iterate of a solver, in whatever form the method produces.
#[derive(Debug, Clone)]
pub enum Estimate {
    /// `X = Z Zᵀ`.
    Factor(Mat<f64>),
    /// `X = U diag(s) Vᵀ`.
    LowRank(LowRankSvd),
    /// `X = U Vᵀ`.
    Product {
        u: Mat<f64>,
        v: Mat<f64>,
    },
    Dense(Mat<f64>),
}

impl Estimate {
    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            Estimate::Factor(z) => z * z.transpose(),
            Estimate::LowRank(f) => f.to_dense(),
            Estimate::Product { u, v } => u * v.transpose(),
            Estimate::Dense(x) => x.clone(),
        }
    }

    pub fn factor(&self) -> Option<MatRef<'_, f64>> {
        match self {
            Estimate::Factor(z) => Some(z.as_ref()),
            _ => None,
        }
    }

    /// `𝒜(X̂)`.
    pub fn predict(&self, ensemble: &MeasurementEnsemble) -> Result<Vec<f64>> {
        match self {
            Estimate::Factor(z) => ensemble.quad_forms(z.as_ref()),
            other => ensemble.apply(other.to_dense().as_ref()),
        }
    }

    pub fn rel_error(&self, truth: &GroundTruth) -> f64 {
        match self {
            Estimate::Factor(z) => truth.rel_error_factor(z.as_ref()),
            Estimate::Dense(x) => truth.rel_error_dense(x.as_ref()),
            other => truth.rel_error_dense(other.to_dense().as_ref()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub method: String,
    pub estimate: Estimate,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
    /// Number of update steps taken.
    pub iterations: usize,
    pub seconds: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_record(&self) -> &TraceRecord {
        self.trace.last().expect("trace is never empty")
    }

    pub fn final_rel_err(&self) -> Option<f64> {
        self.final_record().rel_err
    }

    /// Smallest relative error seen in the trace.
    pub fn best_rel_err(&self) -> Option<f64> {
        self.trace
            .iter()
            .filter_map(|t| t.rel_err)
            .min_by(f64::total_cmp)
    }

    /// Wall time of the first recorded iterate with relative error below
    /// `tol`.
    pub fn time_to(&self, tol: f64) -> Option<f64> {
        self.trace
            .iter()
            .find(|t| t.rel_err.is_some_and(|e| e < tol))
            .map(|t| t.seconds)
    }

    /// Recorded iterations at which the objective went up.
    pub fn ascent_iterations(&self) -> Vec<usize> {
        self.trace
            .windows(2)
            .filter(|w| w[1].f > w[0].f)
            .map(|w| w[1].iter)
            .collect()
    }

    /// `‖𝒜(X̂) − b‖ / ‖b‖`.
    pub fn relative_residual(&self, instance: &Instance) -> Result<f64> {
        let pred = self.estimate.predict(&instance.ensemble)?;
        Ok(instance.relative_residual(&pred))
    }
}

/// What a solver reports about its current iterate.
pub(crate) struct Observation {
    pub f: f64,
    /// `‖𝒜(X) − b‖ / ‖b‖`.
    pub residual: f64,
    pub rel_err: Option<f64>,
    pub dist: Option<f64>,
}

/// Records the trace and applies the shared termination rules.
pub(crate) struct Monitor {
    start: Instant,
    max_iters: usize,
    tol: f64,
    stall_tol: Option<f64>,
    f0: Option<f64>,
    window: VecDeque<f64>,
    pub records: Vec<TraceRecord>,
}

impl Monitor {
    pub fn new(start: Instant, max_iters: usize, tol: f64, stall_tol: Option<f64>) -> Self {
        Self {
            start,
            max_iters,
            tol,
            stall_tol,
            f0: None,
            window: VecDeque::with_capacity(STALL_WINDOW + 1),
            records: Vec::new(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Logs iterate `iter` and returns a termination if the solver should
    /// stop there. Success is judged on the relative error when the truth is
    /// known and on the residual otherwise.
    pub fn observe(&mut self, iter: usize, obs: Observation) -> Option<Termination> {
        let f = obs.f;
        let f0 = *self.f0.get_or_insert(f);
        self.window.push_back(f);
        if self.window.len() > STALL_WINDOW + 1 {
            self.window.pop_front();
        }
        let stop = if !f.is_finite() || f > DIVERGENCE_FACTOR * f0.max(f64::MIN_POSITIVE) {
            Some(Termination::Diverged)
        } else if obs.rel_err.unwrap_or(obs.residual) < self.tol {
            Some(Termination::Converged)
        } else if self
            .stall_tol
            .is_some_and(|tol| self.window.len() == STALL_WINDOW + 1 && self.window[0] - f < tol)
        {
            Some(Termination::Stalled)
        } else if iter >= self.max_iters {
            Some(Termination::MaxIters)
        } else {
            None
        };
        if stop.is_some() || iter <= DENSE_RECORD_LIMIT || iter % SPARSE_RECORD_STRIDE == 0 {
            self.records.push(TraceRecord {
                iter,
                f,
                rel_err: obs.rel_err,
                dist: obs.dist,
                seconds: self.elapsed(),
            });
        }
        stop
    }

    /// Ends the run early (e.g. on a numerical failure) at the last recorded
    /// iterate.
    pub fn finish(self, method: &str, estimate: Estimate, termination: Termination) -> SolveResult {
        let iterations = self.records.last().map_or(0, |r| r.iter);
        let seconds = self.elapsed();
        SolveResult {
            method: method.to_string(),
            estimate,
            trace: self.records,
            termination,
            iterations,
            seconds,
        }
    }
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in trace {
        w.serialize(rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(f: f64) -> Observation {
        Observation {
            f,
            residual: 1.0,
            rel_err: Some(1.0),
            dist: None,
        }
    }

    #[test]
    fn divergence_on_blowup_and_nan() {
        let mut m = Monitor::new(Instant::now(), 100, 1e-5, None);
        assert!(m.observe(0, obs(1.0)).is_none());
        assert_eq!(m.observe(1, obs(2e6)), Some(Termination::Diverged));
        let mut m = Monitor::new(Instant::now(), 100, 1e-5, None);
        m.observe(0, obs(1.0));
        assert_eq!(m.observe(1, obs(f64::NAN)), Some(Termination::Diverged));
    }

    #[test]
    fn stall_needs_full_window() {
        let mut m = Monitor::new(Instant::now(), 10_000, 1e-5, Some(1e-12));
        for k in 0..STALL_WINDOW {
            assert!(m.observe(k, obs(1.0)).is_none(), "stopped at {k}");
        }
        assert_eq!(
            m.observe(STALL_WINDOW, obs(1.0)),
            Some(Termination::Stalled)
        );
    }

    #[test]
    fn converged_uses_truth_when_known() {
        let mut m = Monitor::new(Instant::now(), 10, 1e-5, None);
        let tiny_residual = Observation {
            f: 1.0,
            residual: 0.0,
            rel_err: Some(0.5),
            dist: None,
        };
        assert!(m.observe(0, tiny_residual).is_none());
        let no_truth = Observation {
            f: 1.0,
            residual: 1e-7,
            rel_err: None,
            dist: None,
        };
        assert_eq!(m.observe(1, no_truth), Some(Termination::Converged));
    }

    #[test]
    fn thinned_recording_keeps_final_iterate() {
        let mut m = Monitor::new(Instant::now(), DENSE_RECORD_LIMIT + 15, 1e-5, None);
        let mut k = 0;
        while m.observe(k, obs(1.0)).is_none() {
            k += 1;
        }
        let iters: Vec<usize> = m.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters.len(), DENSE_RECORD_LIMIT + 1 + 1 + 1);
        assert_eq!(*iters.last().unwrap(), DENSE_RECORD_LIMIT + 15);
        assert!(iters.contains(&(DENSE_RECORD_LIMIT + 10)));
        assert!(!iters.contains(&(DENSE_RECORD_LIMIT + 5)));
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        let rec = TraceRecord {
            iter: 0,
            f: 1.5,
            rel_err: None,
            dist: Some(0.25),
            seconds: 0.0,
        };
        write_trace_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iter,f,rel_err,dist,seconds");
        assert_eq!(text.lines().nth(1).unwrap(), "0,1.5,,0.25,0.0");
    }

    fn finite() -> impl Strategy<Value = f64> {
        use prop::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
        POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            (0usize..1_000_000, any::<f64>(), prop::option::of(finite()),
             prop::option::of(finite()), 0.0f64..1e4),
            1..20,
        )) {
            let trace: Vec<TraceRecord> = rows
                .into_iter()
                .map(|(iter, f, rel_err, dist, seconds)| TraceRecord { iter, f, rel_err, dist, seconds })
                .collect();
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &trace).unwrap();
            let back = read_trace_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), trace.len());
            for (a, b) in back.iter().zip(&trace) {
                prop_assert_eq!(a.iter, b.iter);
                prop_assert_eq!(a.f.to_bits() == b.f.to_bits() || (a.f.is_nan() && b.f.is_nan()), true);
                prop_assert_eq!(a.rel_err.map(f64::to_bits), b.rel_err.map(f64::to_bits));
                prop_assert_eq!(a.dist.map(f64::to_bits), b.dist.map(f64::to_bits));
                prop_assert_eq!(a.seconds.to_bits(), b.seconds.to_bits());
            }
        }
    }
}
