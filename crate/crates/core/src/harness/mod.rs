//! Experiment orchestration: sample-complexity phase transitions, runtime
//! comparisons on a shared instance, and single-run convergence traces.
//!
//! Every trial draws its instance from a seed derived from the master seed
//! and the trial coordinates, so results do not depend on scheduling or
//! thread count. Wall-clock columns are the only nondeterministic output.

mod bench;
mod phase;

pub use bench::{
    read_bench_csv, run_convergence_trace, run_runtime_bench, write_bench_csv,
    write_bench_summary_csv, BenchConfig, BenchReport, BenchRow, BenchSummary, ConvergenceTrace,
    TraceConfig,
};
pub use phase::{
    crossing, isotonic_violation, read_phase_csv, run_phase_transition, trial_seed,
    write_phase_csv, write_trials_csv, PhaseCell, PhaseReport, TrialOutcome,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, AdmmConfig, AltMinConfig, SvpConfig};
use crate::error::{Error, Result};
use crate::gd::{self, GdConfig};
use crate::measurement::{EnsembleKind, Instance};
use crate::trace::SolveResult;

/// Success threshold on the final relative Frobenius error.
pub const SUCCESS_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Svp,
    Admm,
    Altmin,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gd, Method::Svp, Method::Admm, Method::Altmin];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Svp => "svp",
            Method::Admm => "admm",
            Method::Altmin => "altmin",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected gd, svp, admm or altmin)"
                ))
            })
    }
}

/// Per-method solver settings. The rank fields of the SVP and AltMin
/// configs are overwritten by the rank of the experiment cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfigs {
    pub gd: GdConfig,
    pub svp: SvpConfig,
    pub admm: AdmmConfig,
    pub altmin: AltMinConfig,
}

impl MethodConfigs {
    pub fn validate(&self, methods: &[Method], n: usize) -> Result<()> {
        for m in methods {
            match m {
                Method::Gd => self.gd.validate()?,
                Method::Svp => self.svp.validate(n)?,
                Method::Admm => self.admm.validate()?,
                Method::Altmin => self.altmin.validate(n)?,
            }
        }
        Ok(())
    }
}

/// Runs `method` on `inst` at rank `r`. `seed` feeds the randomized SVD of
/// SVP.
pub fn run_method(
    method: Method,
    inst: &Instance,
    r: usize,
    configs: &MethodConfigs,
    seed: u64,
) -> Result<SolveResult> {
    match method {
        Method::Gd => gd::solve_gd(inst, r, &configs.gd),
        Method::Svp => baselines::solve_svp(
            inst,
            &SvpConfig {
                r,
                seed,
                ..configs.svp.clone()
            },
        ),
        Method::Admm => baselines::solve_nuclear_admm(inst, &configs.admm),
        Method::Altmin => baselines::solve_altmin(
            inst,
            &AltMinConfig {
                r,
                ..configs.altmin.clone()
            },
        ),
    }
}

/// Measurement family as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleName {
    Goe,
    Bernoulli,
}

pub(crate) fn ensemble_kind(name: EnsembleName, rho: f64) -> Result<EnsembleKind> {
    match name {
        EnsembleName::Goe => Ok(EnsembleKind::Goe),
        EnsembleName::Bernoulli if rho > 0.0 && rho <= 1.0 => Ok(EnsembleKind::Bernoulli { rho }),
        EnsembleName::Bernoulli => Err(Error::InvalidDensity(rho)),
    }
}

/// Phase-transition grid.
///
/// ```toml
/// n = [60, 100]
/// r = [1]
/// m_over_n = [0.5, 0.75, 1.0]   # or: m = [30, 45, 60]
/// ensemble = "goe"
/// trials = 40
/// seed = 7
/// methods = ["gd", "admm"]
///
/// [gd]
/// mu = 0.3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    /// Absolute measurement counts; exclusive with `m_over_n`.
    pub m: Vec<usize>,
    /// Measurement counts as multiples of `n`, rounded to the nearest
    /// integer.
    pub m_over_n: Vec<f64>,
    pub ensemble: EnsembleName,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub gd: GdConfig,
    pub svp: SvpConfig,
    pub admm: AdmmConfig,
    pub altmin: AltMinConfig,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            n: vec![60],
            r: vec![1],
            m: Vec::new(),
            m_over_n: Vec::new(),
            ensemble: EnsembleName::Goe,
            rho: 0.001,
            trials: 40,
            seed: 0,
            methods: vec![Method::Gd],
            gd: GdConfig::default(),
            svp: SvpConfig::default(),
            admm: AdmmConfig::default(),
            altmin: AltMinConfig::default(),
        }
    }
}

impl ExperimentGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        let grid: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad experiment grid: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse {
                path: path.to_owned(),
                msg,
            },
            e => e,
        })
    }

    pub fn configs(&self) -> MethodConfigs {
        MethodConfigs {
            gd: self.gd.clone(),
            svp: self.svp.clone(),
            admm: self.admm.clone(),
            altmin: self.altmin.clone(),
        }
    }

    pub fn kind(&self) -> Result<EnsembleKind> {
        ensemble_kind(self.ensemble, self.rho)
    }

    /// Measurement counts for dimension `n`.
    pub fn m_values(&self, n: usize) -> Vec<usize> {
        if self.m.is_empty() {
            self.m_over_n
                .iter()
                .map(|k| (k * n as f64).round() as usize)
                .collect()
        } else {
            self.m.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.r.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("n, r and methods must be nonempty".into()));
        }
        match (self.m.is_empty(), self.m_over_n.is_empty()) {
            (true, true) => return Err(Error::Config("give either m or m_over_n".into())),
            (false, false) => {
                return Err(Error::Config(
                    "m and m_over_n are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        if self.m_over_n.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Config("m_over_n entries must be positive".into()));
        }
        self.kind()?;
        let configs = self.configs();
        for &n in &self.n {
            if n == 0 {
                return Err(Error::InvalidDimension("n must be at least 1".into()));
            }
            if self.m_values(n).contains(&0) {
                return Err(Error::Config(format!(
                    "a measurement count rounds to 0 at n = {n}"
                )));
            }
            for &r in &self.r {
                if r == 0 || r > n {
                    return Err(Error::InvalidRank { rank: r, n });
                }
            }
            configs.validate(&self.methods, n)?;
        }
        Ok(())
    }
}
