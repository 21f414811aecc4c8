use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ensemble_kind, run_method, EnsembleName, Method, MethodConfigs, SUCCESS_TOL};
use crate::baselines::{AdmmConfig, AltMinConfig, SvpConfig};
use crate::diagnostics::{self, RateEstimate};
use crate::error::{Error, Result};
use crate::gd::{self, GdConfig};
use crate::measurement::generate_instance;
use crate::rng;
use crate::trace::SolveResult;

/// One instance, several methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n: usize,
    pub r: usize,
    pub m_over_n: f64,
    pub ensemble: EnsembleName,
    pub rho: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Error level for the time-to-tolerance summary.
    pub tol: f64,
    pub gd: GdConfig,
    pub svp: SvpConfig,
    pub admm: AdmmConfig,
    pub altmin: AltMinConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::dense()
    }
}

impl BenchConfig {
    /// n = 400, r = 2, m = 6n GOE; μ = 0.8, SVP step 1e-4, ADMM λ = 1e-5,
    /// η = 100.
    pub fn dense() -> Self {
        Self {
            n: 400,
            r: 2,
            m_over_n: 6.0,
            ensemble: EnsembleName::Goe,
            rho: 1.0,
            seed: 1,
            methods: vec![Method::Gd, Method::Svp, Method::Admm],
            tol: SUCCESS_TOL,
            gd: GdConfig {
                mu: 0.8,
                ..GdConfig::default()
            },
            svp: SvpConfig {
                step: 1e-4,
                ..SvpConfig::default()
            },
            admm: AdmmConfig::default(),
            altmin: AltMinConfig::default(),
        }
    }

    /// n = 600, r = 2, m = 7n Bernoulli(0.001); μ = 0.6, SVP step 1e-3,
    /// ADMM λ = 1e-5, η = 100.
    pub fn sparse() -> Self {
        Self {
            n: 600,
            m_over_n: 7.0,
            ensemble: EnsembleName::Bernoulli,
            rho: 0.001,
            gd: GdConfig {
                mu: 0.6,
                ..GdConfig::default()
            },
            svp: SvpConfig {
                step: 1e-3,
                ..SvpConfig::default()
            },
            ..Self::dense()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad bench config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn m(&self) -> usize {
        (self.m_over_n * self.n as f64).round() as usize
    }

    pub fn configs(&self) -> MethodConfigs {
        MethodConfigs {
            gd: self.gd.clone(),
            svp: self.svp.clone(),
            admm: self.admm.clone(),
            altmin: self.altmin.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m() == 0 {
            return Err(Error::InvalidDimension("n and m must be positive".into()));
        }
        if self.r == 0 || self.r > self.n {
            return Err(Error::InvalidRank {
                rank: self.r,
                n: self.n,
            });
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        ensemble_kind(self.ensemble, self.rho)?;
        self.configs().validate(&self.methods, self.n)
    }
}

/// A point of a time-versus-error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub seconds: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: Method,
    pub termination: String,
    pub iterations: usize,
    pub seconds: f64,
    /// Empty when the method never reached the tolerance.
    pub time_to_tol: Option<f64>,
    pub best_rel_err: f64,
    pub final_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
    pub results: Vec<SolveResult>,
    pub generation_seconds: f64,
}

impl BenchReport {
    pub fn summary_for(&self, method: Method) -> Option<&BenchSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Runs every method in turn on one generated instance. Methods run
/// sequentially so their clocks do not compete.
pub fn run_runtime_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let kind = ensemble_kind(config.ensemble, config.rho)?;
    let start = Instant::now();
    let inst = generate_instance(config.n, config.r, config.m(), kind, config.seed)?;
    let generation_seconds = start.elapsed().as_secs_f64();
    let configs = config.configs();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut results = Vec::new();
    for &method in &config.methods {
        let res = run_method(
            method,
            &inst,
            config.r,
            &configs,
            rng::derive_seed(config.seed, &[method as u64]),
        )?;
        rows.extend(res.trace.iter().filter_map(|t| {
            t.rel_err.map(|e| BenchRow {
                method,
                seconds: t.seconds,
                rel_err: e,
            })
        }));
        summary.push(BenchSummary {
            method,
            termination: res.termination.label().to_owned(),
            iterations: res.iterations,
            seconds: res.seconds,
            time_to_tol: res.time_to(config.tol),
            best_rel_err: res.best_rel_err().unwrap_or(f64::NAN),
            final_rel_err: res.final_rel_err().unwrap_or(f64::NAN),
        });
        results.push(res);
    }
    Ok(BenchReport {
        rows,
        summary,
        results,
        generation_seconds,
    })
}

/// CSV with header `method,seconds,rel_err`.
pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_bench_csv<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_bench_summary_csv<W: Write>(out: W, summary: &[BenchSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Single gradient-descent run for a convergence plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub ensemble: EnsembleName,
    pub rho: f64,
    pub seed: u64,
    pub gd: GdConfig,
}

impl Default for TraceConfig {
    /// n = 200, m = 1000, r = 2, GOE.
    fn default() -> Self {
        Self {
            n: 200,
            r: 2,
            m: 1000,
            ensemble: EnsembleName::Goe,
            rho: 1.0,
            seed: 1,
            gd: GdConfig::default(),
        }
    }
}

impl TraceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad trace config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub result: SolveResult,
    /// Fit of `log₁₀ d(Z^k, Z★)`; the error message when the trace is too
    /// short.
    pub rate: std::result::Result<RateEstimate, String>,
}

pub fn run_convergence_trace(config: &TraceConfig) -> Result<ConvergenceTrace> {
    let kind = ensemble_kind(config.ensemble, config.rho)?;
    let inst = generate_instance(config.n, config.r, config.m, kind, config.seed)?;
    let result = gd::solve_gd(&inst, config.r, &config.gd)?;
    let rate = diagnostics::estimate_rate(&result.trace).map_err(|e| e.to_string());
    Ok(ConvergenceTrace { result, rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        BenchConfig::dense().validate().unwrap();
        BenchConfig::sparse().validate().unwrap();
        assert_eq!(BenchConfig::sparse().m(), 4200);
    }

    #[test]
    fn single_iteration_trace_is_too_short() {
        let cfg = TraceConfig {
            n: 10,
            m: 60,
            r: 1,
            gd: GdConfig {
                max_iters: 1,
                ..GdConfig::default()
            },
            ..TraceConfig::default()
        };
        let out = run_convergence_trace(&cfg).unwrap();
        assert!(out.result.trace.len() >= 2);
        assert!(out.rate.unwrap_err().contains("insufficient"));
    }
}
