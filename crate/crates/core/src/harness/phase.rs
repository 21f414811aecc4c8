use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_method, ExperimentGrid, Method, SUCCESS_TOL};
use crate::error::Result;
use crate::measurement::generate_instance;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub successes: usize,
    pub trials: usize,
    pub probability: f64,
}

/// One solver run inside a phase-transition cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub method: Method,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    /// Termination label, or `error` when the solver returned an error.
    pub termination: String,
    pub reason: String,
    /// NaN when the run produced no error estimate.
    pub final_rel_err: f64,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub cells: Vec<PhaseCell>,
    pub trials: Vec<TrialOutcome>,
}

impl PhaseReport {
    /// Cells of one curve, in increasing `m`.
    pub fn curve(&self, method: Method, n: usize, r: usize) -> Vec<PhaseCell> {
        let mut out: Vec<PhaseCell> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.n == n && c.r == r)
            .cloned()
            .collect();
        out.sort_by_key(|c| c.m);
        out
    }
}

/// Instance seed for trial `t` of cell `(n, r, m)`; shared by all methods.
pub fn trial_seed(master: u64, n: usize, r: usize, m: usize, t: usize) -> u64 {
    rng::derive_seed(master, &[n as u64, r as u64, m as u64, t as u64])
}

pub fn run_phase_transition(grid: &ExperimentGrid) -> Result<PhaseReport> {
    grid.validate()?;
    let kind = grid.kind()?;
    let configs = grid.configs();
    let mut jobs = Vec::new();
    for &n in &grid.n {
        for &r in &grid.r {
            for m in grid.m_values(n) {
                for t in 0..grid.trials {
                    jobs.push((n, r, m, t));
                }
            }
        }
    }
    let per_job: Vec<Vec<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(n, r, m, t)| {
            let seed = trial_seed(grid.seed, n, r, m, t);
            let inst = generate_instance(n, r, m, kind, seed);
            grid.methods
                .iter()
                .map(|&method| {
                    let base = TrialOutcome {
                        method,
                        n,
                        r,
                        m,
                        trial: t,
                        seed,
                        success: false,
                        termination: "error".into(),
                        reason: String::new(),
                        final_rel_err: f64::NAN,
                        iterations: 0,
                        seconds: 0.0,
                    };
                    let inst = match &inst {
                        Ok(i) => i,
                        Err(e) => {
                            return TrialOutcome {
                                reason: e.to_string(),
                                ..base
                            }
                        }
                    };
                    let solver_seed = rng::derive_seed(seed, &[method as u64]);
                    match run_method(method, inst, r, &configs, solver_seed) {
                        Ok(res) => {
                            let err = res.final_rel_err().unwrap_or(f64::NAN);
                            TrialOutcome {
                                success: err < SUCCESS_TOL,
                                termination: res.termination.label().to_owned(),
                                reason: match &res.termination {
                                    crate::trace::Termination::Failed(why) => why.clone(),
                                    _ => String::new(),
                                },
                                final_rel_err: err,
                                iterations: res.iterations,
                                seconds: res.seconds,
                                ..base
                            }
                        }
                        Err(e) => TrialOutcome {
                            reason: e.to_string(),
                            ..base
                        },
                    }
                })
                .collect()
        })
        .collect();
    let trials: Vec<TrialOutcome> = per_job.into_iter().flatten().collect();

    let mut cells: Vec<PhaseCell> = Vec::new();
    for &method in &grid.methods {
        for &n in &grid.n {
            for &r in &grid.r {
                for m in grid.m_values(n) {
                    let successes = trials
                        .iter()
                        .filter(|o| {
                            o.method == method && o.n == n && o.r == r && o.m == m && o.success
                        })
                        .count();
                    cells.push(PhaseCell {
                        method,
                        n,
                        r,
                        m,
                        successes,
                        trials: grid.trials,
                        probability: successes as f64 / grid.trials as f64,
                    });
                }
            }
        }
    }
    Ok(PhaseReport { cells, trials })
}

/// Smallest `m` at which the success probability reaches 1/2, linearly
/// interpolated between grid points. Returns the first grid point if it
/// already reaches 1/2, and `None` if no point does. `curve` must be sorted
/// by `m`.
pub fn crossing(curve: &[PhaseCell]) -> Option<f64> {
    let k = curve.iter().position(|c| c.probability >= 0.5)?;
    if k == 0 {
        return Some(curve[0].m as f64);
    }
    let (a, b) = (&curve[k - 1], &curve[k]);
    let t = (0.5 - a.probability) / (b.probability - a.probability);
    Some(a.m as f64 + t * (b.m as f64 - a.m as f64))
}

/// Largest deviation of `p` from its nondecreasing least-squares fit
/// (pool-adjacent-violators).
pub fn isotonic_violation(p: &[f64]) -> f64 {
    // Blocks of (sum, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(p.len());
    for &v in p {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 <= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
        }
    }
    let fit = blocks
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n(s / c as f64, c));
    p.iter()
        .zip(fit)
        .map(|(v, f)| (v - f).abs())
        .fold(0.0, f64::max)
}

/// CSV with header `method,n,r,m,successes,trials,probability`.
pub fn write_phase_csv<W: Write>(out: W, cells: &[PhaseCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_phase_csv<R: Read>(input: R) -> Result<Vec<PhaseCell>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trials {
        w.serialize(t)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(m: usize, p: f64) -> PhaseCell {
        PhaseCell {
            method: Method::Gd,
            n: 10,
            r: 1,
            m,
            successes: (p * 10.0) as usize,
            trials: 10,
            probability: p,
        }
    }

    #[test]
    fn crossing_interpolates() {
        let c = [cell(10, 0.0), cell(20, 0.25), cell(30, 0.75), cell(40, 1.0)];
        assert_eq!(crossing(&c), Some(25.0));
        assert_eq!(crossing(&c[2..]), Some(30.0));
        assert_eq!(crossing(&c[..2]), None);
    }

    #[test]
    fn isotonic_fit() {
        assert_eq!(isotonic_violation(&[0.0, 0.5, 1.0]), 0.0);
        assert!((isotonic_violation(&[0.0, 0.6, 0.4, 1.0]) - 0.1).abs() < 1e-12);
        assert!((isotonic_violation(&[1.0, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phase_csv_header() {
        let mut buf = Vec::new();
        write_phase_csv(&mut buf, &[cell(20, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "method,n,r,m,successes,trials,probability"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "gd,10,1,20,5,10,0.5");
    }
}
