//! `lowrank`: generate instances, run solvers and reproduce the experiments.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a solver
//! fails or does not converge.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::Mat;
use serde::Serialize;

use lowrank_core::baselines::{AdmmConfig, SvpConfig};
use lowrank_core::diagnostics;
use lowrank_core::gd::GdConfig;
use lowrank_core::harness::{
    self, BenchConfig, ExperimentGrid, Method, MethodConfigs, TraceConfig,
};
use lowrank_core::measurement::io::{read_instance, write_instance};
use lowrank_core::sdp::{self, SdpMethod};
use lowrank_core::trace::{write_trace_csv, SolveResult, Termination};
use lowrank_core::{generate_instance, EnsembleKind, Error};

#[derive(Parser, Debug)]
#[command(
    name = "lowrank",
    version,
    about = "Low-rank PSD matrix recovery from random measurements"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// TOML configuration file (phase, bench, trace).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel trials.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random planted instance to `<out>/<name>`.
    Gen(GenArgs),
    /// Run one solver on an instance directory.
    Solve(SolveArgs),
    /// Sample-complexity phase transition over a grid.
    Phase,
    /// Runtime comparison on one instance.
    Bench(BenchArgs),
    /// Gradient-descent convergence trace with a rate fit.
    Trace(TraceArgs),
    /// Monte-Carlo diagnostics.
    Check(CheckArgs),
    /// Solve a positive-definite-cost SDP through the rank-minimization
    /// reduction.
    Sdp(SdpArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Ensemble {
    Goe,
    Bernoulli,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(
        long,
        conflicts_with = "m_over_n",
        required_unless_present = "m_over_n"
    )]
    m: Option<usize>,
    #[arg(long)]
    m_over_n: Option<f64>,
    #[arg(long, value_enum, default_value = "goe")]
    ensemble: Ensemble,
    #[arg(long, default_value_t = 0.001)]
    rho: f64,
    /// Directory name under `--out`.
    #[arg(long, default_value = "instance")]
    name: String,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    instance: PathBuf,
    /// Target rank; defaults to the planted rank.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    /// SVP step size.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scenario {
    Dense,
    Sparse,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Preset used when no `--config` is given.
    #[arg(long, value_enum, default_value = "dense")]
    scenario: Scenario,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CheckKind {
    /// Error of M/2 against X★ over a grid of m.
    Mean,
    /// Rank-one measurement average against 2uuᵀ.
    A1,
    /// GOE sandwich average against its expectation.
    Hessian,
    /// Regularity margins around the truth.
    Regularity,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(value_enum)]
    kind: CheckKind,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Measurement count (a1, hessian, regularity).
    #[arg(long)]
    m: Option<usize>,
    /// Grid of m as multiples of n (mean, a1).
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0, 16.0])]
    m_grid: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Sampled points (regularity).
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 24.0)]
    alpha: f64,
    /// β as a multiple of κn (regularity).
    #[arg(long, default_value_t = 513.0)]
    beta_per_kappa_n: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SdpSolver {
    Gd,
    Svp,
    Admm,
}

#[derive(Args, Debug)]
struct SdpArgs {
    /// Problem in the `n m` / `mat row col value` text format.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "admm")]
    method: SdpSolver,
    /// Factor width for gd, truncation rank for svp.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(_) | Error::SingularGram { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Gen(a) => gen(&cli, a),
        Command::Solve(a) => solve(&cli, a),
        Command::Phase => phase(&cli),
        Command::Bench(a) => bench(&cli, a),
        Command::Trace(a) => trace(&cli, a),
        Command::Check(a) => check(&cli, a),
        Command::Sdp(a) => sdp_cmd(&cli, a),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::write(path, text + "\n")
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn kind_of(ensemble: Ensemble, rho: f64) -> EnsembleKind {
    match ensemble {
        Ensemble::Goe => EnsembleKind::Goe,
        Ensemble::Bernoulli => EnsembleKind::Bernoulli { rho },
    }
}

fn gen(cli: &Cli, a: &GenArgs) -> CliResult {
    let m = match (a.m, a.m_over_n) {
        (Some(m), _) => m,
        (None, Some(k)) => (k * a.n as f64).round() as usize,
        (None, None) => unreachable!("clap requires one of --m, --m-over-n"),
    };
    let inst = generate_instance(a.n, a.r, m, kind_of(a.ensemble, a.rho), cli.seed)?;
    let dir = cli.out.join(&a.name);
    write_instance(&dir, &inst)?;
    println!(
        "wrote {} (n = {}, r = {}, m = {m})",
        dir.display(),
        a.n,
        a.r
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    method: &'a str,
    termination: &'a str,
    iterations: usize,
    seconds: f64,
    final_rel_err: Option<f64>,
    relative_residual: f64,
}

fn report(result: &SolveResult, residual: f64, out: &Path) -> CliResult {
    write_trace_csv(create(&out.join("trace.csv"))?, &result.trace)?;
    let summary = SolveSummary {
        method: &result.method,
        termination: result.termination.label(),
        iterations: result.iterations,
        seconds: result.seconds,
        final_rel_err: result.final_rel_err(),
        relative_residual: residual,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{}: {} after {} iterations, relative residual {:.3e}{}",
        result.method,
        result.termination,
        result.iterations,
        residual,
        result
            .final_rel_err()
            .map(|e| format!(", relative error {e:.3e}"))
            .unwrap_or_default()
    );
    match &result.termination {
        Termination::Converged => Ok(()),
        t => Err(Failure::Solver(format!(
            "{} did not converge ({t})",
            result.method
        ))),
    }
}

fn solve(cli: &Cli, a: &SolveArgs) -> CliResult {
    let inst = read_instance(&a.instance)?;
    let rank = a
        .rank
        .or(inst.rank())
        .ok_or_else(|| Failure::Usage("instance has no planted rank; pass --rank".into()))?;
    let mut cfg = MethodConfigs::default();
    if let Some(mu) = a.mu {
        cfg.gd.mu = mu;
    }
    if let Some(step) = a.step {
        cfg.svp.step = step;
    }
    if let Some(eta) = a.eta {
        cfg.admm.eta = eta;
    }
    if let Some(lambda) = a.lambda {
        cfg.admm.lambda = lambda;
    }
    if let Some(k) = a.max_iters {
        cfg.gd.max_iters = k;
        cfg.svp.max_iters = k;
        cfg.admm.max_iters = k;
        cfg.altmin.max_iters = k;
    }
    if let Some(t) = a.tol {
        cfg.gd.rel_err_tol = t;
        cfg.svp.rel_err_tol = t;
        cfg.admm.rel_err_tol = t;
        cfg.altmin.rel_err_tol = t;
    }
    let result = harness::run_method(a.method, &inst, rank, &cfg, cli.seed)?;
    let residual = result.relative_residual(&inst)?;
    report(&result, residual, &cli.out)
}

fn phase(cli: &Cli) -> CliResult {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("phase needs --config <grid.toml>".into()))?;
    let mut grid = ExperimentGrid::load(path)?;
    grid.seed = cli.seed;
    let rep = harness::run_phase_transition(&grid)?;
    harness::write_phase_csv(create(&cli.out.join("phase.csv"))?, &rep.cells)?;
    harness::write_trials_csv(create(&cli.out.join("trials.csv"))?, &rep.trials)?;
    for &method in &grid.methods {
        for &n in &grid.n {
            for &r in &grid.r {
                let curve = rep.curve(method, n, r);
                let probs: Vec<String> = curve
                    .iter()
                    .map(|c| format!("{:.2}", c.probability))
                    .collect();
                let cross = harness::crossing(&curve)
                    .map(|m| format!("{:.2}n", m / n as f64))
                    .unwrap_or_else(|| "none".into());
                println!(
                    "{method} n={n} r={r}: [{}] crossing {cross}",
                    probs.join(" ")
                );
            }
        }
    }
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::load(p)?,
        None => match a.scenario {
            Scenario::Dense => BenchConfig::dense(),
            Scenario::Sparse => BenchConfig::sparse(),
        },
    };
    cfg.seed = cli.seed;
    if !a.methods.is_empty() {
        cfg.methods = a.methods.clone();
    }
    let rep = harness::run_runtime_bench(&cfg)?;
    harness::write_bench_csv(create(&cli.out.join("bench.csv"))?, &rep.rows)?;
    harness::write_bench_summary_csv(create(&cli.out.join("bench_summary.csv"))?, &rep.summary)?;
    for s in &rep.summary {
        let t = s
            .time_to_tol
            .map(|t| format!("{t:.2}s"))
            .unwrap_or_else(|| "not reached".into());
        println!(
            "{}: {} in {} iterations, time to {:.0e}: {t}, best error {:.3e}",
            s.method, s.termination, s.iterations, cfg.tol, s.best_rel_err
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct RateSummary {
    termination: String,
    iterations: usize,
    slope: Option<f64>,
    r_squared: Option<f64>,
    degenerate: Option<bool>,
    error: Option<String>,
}

fn trace(cli: &Cli, a: &TraceArgs) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => TraceConfig::load(p)?,
        None => TraceConfig::default(),
    };
    cfg.seed = cli.seed;
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.r = a.r.unwrap_or(cfg.r);
    cfg.m = a.m.unwrap_or(cfg.m);
    if let Some(mu) = a.mu {
        cfg.gd.mu = mu;
    }
    if let Some(k) = a.max_iters {
        cfg.gd.max_iters = k;
    }
    let out = harness::run_convergence_trace(&cfg)?;
    write_trace_csv(create(&cli.out.join("trace.csv"))?, &out.result.trace)?;
    let (rate, error) = match &out.rate {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.clone())),
    };
    let summary = RateSummary {
        termination: out.result.termination.label().to_owned(),
        iterations: out.result.iterations,
        slope: rate.map(|r| r.slope),
        r_squared: rate.map(|r| r.r_squared),
        degenerate: rate.map(|r| r.degenerate),
        error,
    };
    write_json(&cli.out.join("rate.json"), &summary)?;
    match rate {
        Some(r) => println!(
            "{} after {} iterations; log10 distance slope {:.4e}, R² {:.4}",
            out.result.termination, out.result.iterations, r.slope, r.r_squared
        ),
        None => println!(
            "{} after {} iterations; {}",
            out.result.termination,
            out.result.iterations,
            summary.error.as_deref().unwrap_or("")
        ),
    }
    Ok(())
}

fn check(cli: &Cli, a: &CheckArgs) -> CliResult {
    let grid: Vec<usize> = a
        .m_grid
        .iter()
        .map(|k| (k * a.n as f64).round() as usize)
        .collect();
    let json = match a.kind {
        CheckKind::Mean => {
            diagnostics::check_mean_estimator(a.n, a.r, &grid, a.trials, cli.seed)?.to_json()?
        }
        CheckKind::A1 => {
            let grid = a.m.map(|m| vec![m]).unwrap_or(grid);
            diagnostics::check_a1_trials(a.n, &grid, a.trials, cli.seed)?.to_json()?
        }
        CheckKind::Hessian => {
            let m = a.m.unwrap_or(100_000);
            let mut x = vec![0.0; a.n];
            x[0] = 1.0;
            let chk = diagnostics::check_hessian_expectation(&x, &x, m, cli.seed)?;
            serde_json::to_string_pretty(&serde_json::json!({
                "n": a.n,
                "m": m,
                "deviation": chk.deviation,
            }))
            .map_err(|e| Failure::Usage(e.to_string()))?
        }
        CheckKind::Regularity => {
            let m =
                a.m.unwrap_or_else(|| (12.0 * a.n as f64 * (a.n as f64).ln()).round() as usize);
            let inst = generate_instance(a.n, a.r, m, EnsembleKind::Goe, cli.seed)?;
            let kappa = inst.truth.as_ref().map_or(1.0, |t| t.kappa);
            let beta = a.beta_per_kappa_n * kappa * a.n as f64;
            let rep =
                diagnostics::regularity_spot_check(&inst, a.samples, a.alpha, beta, cli.seed)?;
            serde_json::to_string_pretty(&rep).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    let name = match a.kind {
        CheckKind::Mean => "mean",
        CheckKind::A1 => "a1",
        CheckKind::Hessian => "hessian",
        CheckKind::Regularity => "regularity",
    };
    fs::write(
        cli.out.join(format!("check_{name}.json")),
        format!("{json}\n"),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = writeln!(std::io::stdout(), "{json}");
    Ok(())
}

fn write_matrix_csv(path: &Path, x: &Mat<f64>) -> CliResult {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    for i in 0..x.nrows() {
        w.write_record((0..x.ncols()).map(|j| format!("{:e}", x[(i, j)])))
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Usage(e.to_string()))
}

fn sdp_cmd(cli: &Cli, a: &SdpArgs) -> CliResult {
    let problem = sdp::read_sdp(&a.problem)?;
    let method = match a.method {
        SdpSolver::Gd => SdpMethod::Gd {
            rank: a.rank,
            config: GdConfig {
                mu: a.mu.unwrap_or(GdConfig::default().mu),
                max_iters: a.max_iters.unwrap_or(GdConfig::default().max_iters),
                ..GdConfig::default()
            },
        },
        SdpSolver::Svp => SdpMethod::Svp(SvpConfig {
            r: a.rank,
            step: a.step.unwrap_or(SvpConfig::default().step),
            max_iters: a.max_iters.unwrap_or(SvpConfig::default().max_iters),
            seed: cli.seed,
            ..SvpConfig::default()
        }),
        SdpSolver::Admm => SdpMethod::Admm(AdmmConfig {
            max_iters: a.max_iters.unwrap_or(AdmmConfig::default().max_iters),
            ..AdmmConfig::default()
        }),
    };
    let sol = sdp::solve_sdp(&problem, &method)?;
    write_matrix_csv(&cli.out.join("sdp_solution.csv"), &sol.x_tilde)?;
    println!("objective {:.10e}", sol.objective);
    // Without a planted truth the solvers stop on the relative residual.
    let reduced = sdp::reduce_sdp(&problem)?;
    let residual = sol.result.relative_residual(&reduced.instance()?)?;
    report(&sol.result, residual, &cli.out)
}
