//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome so that `cargo test` reports the lines
//! without aborting; set `ACCEPTANCE_STRICT=1` to exit 1 on any FAIL.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use faer::Mat;
use lowrank_core::baselines::{AdmmConfig, SvpConfig};
use lowrank_core::diagnostics::{check_mean_estimator, median, regularity_spot_check};
use lowrank_core::gd::{self, GdConfig};
use lowrank_core::harness::{
    crossing, run_convergence_trace, run_phase_transition, run_runtime_bench, BenchConfig,
    ExperimentGrid, Method, PhaseCell, PhaseReport, TraceConfig, SUCCESS_TOL,
};
use lowrank_core::linalg::{
    best_rank_r, procrustes_distance, singular_values, spectral_ball_project, svt_prox,
};
use lowrank_core::measurement::sample_goe;
use lowrank_core::rng::{rng_from_seed, Rng};
use lowrank_core::sdp::{lift_solution, lower_solution, reduce_sdp, SdpProblem};
use lowrank_core::trace::Termination;
use lowrank_core::{generate_instance, EnsembleKind, Instance, MeasurementEnsemble};
use rand_distr::{Distribution, StandardNormal};

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: String) -> Line {
    println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, detail }
}

fn gaussian(n: usize, k: usize, rng: &mut Rng) -> Mat<f64> {
    Mat::from_fn(n, k, |_, _| StandardNormal.sample(rng))
}

fn frob(x: &Mat<f64>) -> f64 {
    x.norm_l2()
}

fn orthonormal(n: usize, k: usize, rng: &mut Rng) -> Mat<f64> {
    gaussian(n, k, rng).qr().compute_thin_Q()
}

fn truth(inst: &Instance) -> &Mat<f64> {
    &inst.truth.as_ref().expect("planted").zstar
}

fn naive_objective(mats: &[Mat<f64>], b: &[f64], z: &Mat<f64>) -> f64 {
    let x = z * z.transpose();
    let n = x.nrows();
    let mut s = 0.0;
    for (a, bi) in mats.iter().zip(b) {
        let mut t = 0.0;
        for i in 0..n {
            for k in 0..n {
                t += a[(i, k)] * x[(k, i)];
            }
        }
        s += (t - bi) * (t - bi);
    }
    s / (4.0 * mats.len() as f64)
}

fn c1_gradient() -> Line {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let n = 5 + (k as usize % 16);
        let r = 1 + (k as usize % 3);
        let kind = if k % 5 == 4 {
            EnsembleKind::Bernoulli { rho: 0.3 }
        } else {
            EnsembleKind::Goe
        };
        let inst = generate_instance(n, r, 3 * n, kind, 1000 + k).unwrap();
        let mats: Vec<Mat<f64>> = (0..inst.m()).map(|i| inst.ensemble.matrix(i)).collect();
        let z = gaussian(n, r, &mut rng_from_seed(k));
        let g = gd::gradient(z.as_ref(), &inst).unwrap();
        let h = 1e-5;
        let mut fd = Mat::<f64>::zeros(n, r);
        for j in 0..r {
            for i in 0..n {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[(i, j)] += h;
                zm[(i, j)] -= h;
                fd[(i, j)] = (naive_objective(&mats, &inst.b, &zp)
                    - naive_objective(&mats, &inst.b, &zm))
                    / (2.0 * h);
            }
        }
        let floor = 1e-6 * fd.norm_max();
        for j in 0..r {
            for i in 0..n {
                worst = worst.max((g[(i, j)] - fd[(i, j)]).abs() / fd[(i, j)].abs().max(floor));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    line(
        "C1 gradient vs central differences",
        worst <= 1e-5 && secs < 10.0,
        format!(
            "50 instances, worst relative entry error {worst:.2e} (≤ 1e-5), {secs:.1} s (< 10 s)"
        ),
    )
}

fn dense_recovery(id: &'static str, n: usize, budget: f64) -> Line {
    let start = Instant::now();
    let inst = generate_instance(n, 2, 6 * n, EnsembleKind::Goe, 1).unwrap();
    let res = gd::solve_gd(&inst, 2, &GdConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = res.final_rel_err().unwrap();
    line(
        id,
        err < SUCCESS_TOL && secs < budget,
        format!(
            "n={n}, r=2, m=6n, μ=0.8: {} after {} iterations, relative error {err:.2e} (< 1e-5), {secs:.1} s (< {budget} s)",
            res.termination, res.iterations
        ),
    )
}

fn c3_linear_rate() -> Line {
    let cfg = TraceConfig::default();
    let out = run_convergence_trace(&cfg).unwrap();
    let last = out.result.final_record().dist.unwrap();
    match out.rate {
        Ok(rate) => line(
            "C3 linear convergence",
            rate.r_squared >= 0.99 && rate.slope < 0.0,
            format!(
                "n=200, m=1000, r=2, μ=0.8: {} after {} iterations, slope {:.3e}, R² {:.4} (≥ 0.99), final distance {last:.2e}",
                out.result.termination, out.result.iterations, rate.slope, rate.r_squared
            ),
        ),
        Err(e) => line("C3 linear convergence", false, e),
    }
}

fn phase_grid(n: Vec<usize>, r: usize, m_over_n: Vec<f64>, methods: Vec<Method>) -> ExperimentGrid {
    ExperimentGrid {
        n,
        r: vec![r],
        m_over_n,
        trials: 40,
        seed: 2024,
        methods,
        gd: GdConfig {
            mu: 0.3 * r as f64,
            max_iters: 15_000,
            ..GdConfig::default()
        },
        admm: AdmmConfig {
            max_iters: 3000,
            ..AdmmConfig::default()
        },
        ..ExperimentGrid::default()
    }
}

fn probabilities(curve: &[PhaseCell]) -> String {
    curve
        .iter()
        .map(|c| format!("{:.2}", c.probability))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c4_phase() -> Vec<Line> {
    let mut lines = Vec::new();
    let mut gd_crossing_60_r1 = None;
    for (r, band, grid) in [
        (1, (1.25, 1.75), vec![0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5]),
        (2, (2.25, 2.75), vec![1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.5]),
    ] {
        let start = Instant::now();
        let report = run_phase_transition(&phase_grid(
            vec![60, 100],
            r,
            grid.clone(),
            vec![Method::Gd],
        ))
        .unwrap();
        let secs = start.elapsed().as_secs_f64();
        for n in [60, 100] {
            let curve = report.curve(Method::Gd, n, r);
            let x = crossing(&curve).map(|m| m / n as f64);
            if n == 60 && r == 1 {
                gd_crossing_60_r1 = x;
            }
            let pass = x.is_some_and(|x| x >= band.0 && x <= band.1);
            lines.push(line(
                if r == 1 { "C4 gd phase transition, r=1" } else { "C4 gd phase transition, r=2" },
                pass,
                format!(
                    "n={n}: crossing {} in [{}n, {}n]; m/n {grid:?} → P {} ({secs:.0} s for both n)",
                    x.map_or("none".into(), |x| format!("{x:.3}n")),
                    band.0,
                    band.1,
                    probabilities(&curve)
                ),
            ));
        }
    }

    let start = Instant::now();
    let grid = vec![1.0, 1.25, 1.5, 2.0, 2.5, 3.0];
    let report =
        run_phase_transition(&phase_grid(vec![60], 1, grid.clone(), vec![Method::Admm])).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let curve = report.curve(Method::Admm, 60, 1);
    let admm = crossing(&curve).map(|m| m / 60.0);
    // Count runs stopped by the iteration cap while still improving as
    // successes too; the comparison must survive that.
    let optimistic = optimistic_curve(&report, &curve);
    let admm_opt = crossing(&optimistic).map(|m| m / 60.0);
    let capped = report
        .trials
        .iter()
        .filter(|t| t.termination == Termination::MaxIters.label())
        .count();
    let later = |x: Option<f64>| match (x, gd_crossing_60_r1) {
        (Some(a), Some(g)) => a > g,
        (None, Some(_)) => true,
        _ => false,
    };
    let fmt = |x: Option<f64>| x.map_or("none".into(), |x| format!("{x:.3}n"));
    lines.push(line(
        "C4 nuclear-norm transition occurs later",
        later(admm) && later(admm_opt),
        format!(
            "n=60, r=1: admm crossing {} vs gd {}; m/n {grid:?} → P {}; {capped} runs hit the 3000-iteration cap, counting those below 1e-2 as successes gives crossing {} ({secs:.0} s)",
            fmt(admm),
            fmt(gd_crossing_60_r1),
            probabilities(&curve),
            fmt(admm_opt)
        ),
    ));
    lines
}

fn optimistic_curve(report: &PhaseReport, curve: &[PhaseCell]) -> Vec<PhaseCell> {
    curve
        .iter()
        .map(|c| {
            let s = report
                .trials
                .iter()
                .filter(|t| {
                    t.m == c.m
                        && t.method == c.method
                        && (t.success || (t.termination == "max-iters" && t.final_rel_err < 1e-2))
                })
                .count();
            PhaseCell {
                successes: s,
                probability: s as f64 / c.trials as f64,
                ..c.clone()
            }
        })
        .collect()
}

fn c5_sparse_ordering() -> Line {
    let mut cfg = BenchConfig::sparse();
    cfg.methods = vec![Method::Gd, Method::Svp, Method::Admm];
    cfg.svp = SvpConfig {
        max_iters: 2000,
        ..cfg.svp
    };
    cfg.admm = AdmmConfig {
        max_iters: 200,
        ..cfg.admm
    };
    let report = run_runtime_bench(&cfg).unwrap();
    let gd = report.summary_for(Method::Gd).unwrap();
    let Some(t_gd) = gd.time_to_tol else {
        return line(
            "C5 sparse method ordering",
            false,
            format!("gd never reached 1e-5 ({})", gd.termination),
        );
    };
    let mut pass = true;
    let mut parts = vec![format!("gd {t_gd:.2} s")];
    for method in [Method::Svp, Method::Admm] {
        let s = report.summary_for(method).unwrap();
        // A capped run gives a lower bound; any other stop short of the
        // tolerance means it is never reached.
        let (ratio, note) = match s.time_to_tol {
            Some(t) => (t / t_gd, String::new()),
            None if s.termination == "max-iters" => (
                s.seconds / t_gd,
                format!(
                    " (lower bound: capped at {} iterations, error {:.1e})",
                    s.iterations, s.final_rel_err
                ),
            ),
            None => (
                f64::INFINITY,
                format!(" ({} at error {:.1e})", s.termination, s.final_rel_err),
            ),
        };
        pass &= ratio >= 2.0;
        parts.push(format!("{method} ratio {ratio:.1}×{note}"));
    }
    line(
        "C5 sparse method ordering",
        pass,
        format!(
            "n=600, r=2, m=7n, ρ=0.001, time to 1e-5: {} (each ≥ 2×)",
            parts.join(", ")
        ),
    )
}

fn c6_mean_slope() -> Line {
    let n = 40;
    let rep = check_mean_estimator(n, 1, &[2 * n, 4 * n, 8 * n, 16 * n], 20, 6).unwrap();
    let slope = rep.slope.unwrap();
    line(
        "C6 mean-estimator concentration slope",
        (-0.65..=-0.35).contains(&slope),
        format!(
            "n=40, m ∈ {{2n,4n,8n,16n}}, 20 trials: log-log slope {slope:.3} in [−0.65, −0.35]"
        ),
    )
}

fn c7_init() -> Line {
    let ratios: Vec<f64> = (0..20)
        .map(|s| {
            let inst = generate_instance(60, 2, 600, EnsembleKind::Goe, 700 + s).unwrap();
            let init = gd::spectral_init(&inst, 2).unwrap();
            let d = procrustes_distance(init.z0.as_ref(), truth(&inst).as_ref()).unwrap();
            let sigma_r = inst.truth.as_ref().unwrap().sigma_min();
            d / (3.0 * sigma_r / 16.0).sqrt()
        })
        .collect();
    let med = median(&ratios);
    line(
        "C7 initialization inside the contraction ball",
        med <= 1.0,
        format!(
            "n=60, r=2, m=10n, 20 seeds: median d(Z⁰,Z★)/√(3σ_r/16) = {med:.3} (≤ 1), max {:.3}",
            ratios.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn c8_regularity() -> Line {
    let n = 60usize;
    let m = (12.0 * n as f64 * (n as f64).ln()).round() as usize;
    let shares: Vec<f64> = (0..5)
        .map(|s| {
            let inst = generate_instance(n, 1, m, EnsembleKind::Goe, 800 + s).unwrap();
            // κ = 1 at rank one.
            let rep = regularity_spot_check(&inst, 100, 24.0, 513.0 * n as f64, 900 + s).unwrap();
            rep.satisfied
        })
        .collect();
    let worst = shares.iter().cloned().fold(1.0, f64::min);
    line(
        "C8 regularity condition spot check",
        worst >= 0.95,
        format!("n=60, r=1, m={m}, α=24, β=513κn, 100 points × 5 instances: worst share satisfied {worst:.2} (≥ 0.95)"),
    )
}

fn c9_oracles() -> Line {
    let mut rng = rng_from_seed(9);
    let mut worst = [0.0f64; 5];

    for _ in 0..50 {
        let z = gaussian(30, 3, &mut rng);
        let u = orthonormal(3, 3, &mut rng);
        let d = procrustes_distance((&z * &u).as_ref(), z.as_ref()).unwrap();
        worst[0] = worst[0].max(d / frob(&z));
    }

    for k in 0..20 {
        // Below 64 the exact path; above it the randomized one on a
        // spectrum with a gap.
        let (n, r) = if k < 10 {
            (20 + 4 * k, 1 + k % 4)
        } else {
            (80 + 8 * k, 1 + k % 4)
        };
        let x = if k < 10 {
            gaussian(n, n, &mut rng)
        } else {
            let a = gaussian(n, r, &mut rng);
            let b = gaussian(n, r, &mut rng);
            &a * b.transpose() + 1e-3 * gaussian(n, n, &mut rng)
        };
        let sv = singular_values(x.as_ref()).unwrap();
        let optimal: f64 = sv[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let y = best_rank_r(x.as_ref(), r, &mut rng).unwrap();
        worst[1] = worst[1].max((frob(&(&x - &y)) - optimal).abs() / optimal);
    }

    for (k, kind) in [
        (0, EnsembleKind::Goe),
        (1, EnsembleKind::Bernoulli { rho: 0.2 }),
    ] {
        let ens = match kind {
            EnsembleKind::Goe => MeasurementEnsemble::goe(15, 40, k).unwrap(),
            _ => MeasurementEnsemble::bernoulli(15, 40, 0.2, k).unwrap(),
        };
        for _ in 0..10 {
            let g = gaussian(15, 15, &mut rng);
            let x = &g + g.transpose();
            let alpha: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ax = ens.apply(x.as_ref()).unwrap();
            let lhs: f64 = ax.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let adj = ens.adjoint(&alpha).unwrap();
            let mut rhs = 0.0;
            for j in 0..15 {
                for i in 0..15 {
                    rhs += x[(i, j)] * adj[(i, j)];
                }
            }
            let scale = frob(&x) * alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst[2] = worst[2].max((lhs - rhs).abs() / scale);
        }
    }

    for k in 0..10 {
        let n = 12;
        let q = orthonormal(n, n, &mut rng);
        let p = if k % 2 == 0 {
            q.clone()
        } else {
            orthonormal(n, n, &mut rng)
        };
        let s: Vec<f64> = (0..n).map(|i| 3.0 / (i + 1) as f64).collect();
        let build = |g: &dyn Fn(f64) -> f64| {
            let qs = Mat::from_fn(n, n, |i, j| q[(i, j)] * g(s[j]));
            &qs * p.transpose()
        };
        let x = build(&|v| v);
        let prox = svt_prox(x.as_ref(), 0.7).unwrap();
        let proj = spectral_ball_project(x.as_ref()).unwrap();
        worst[3] = worst[3].max(frob(&(&prox - build(&|v| (v - 0.7).max(0.0)))));
        worst[3] = worst[3].max(frob(&(&proj - build(&|v| v.min(1.0)))));
    }

    for k in 0..10 {
        let n = 8;
        let g = gaussian(n, n, &mut rng);
        let mut c = &g * g.transpose();
        for i in 0..n {
            c[(i, i)] += 0.5;
        }
        let a: Vec<Mat<f64>> = (0..3).map(|_| sample_goe(n, &mut rng).unwrap()).collect();
        let problem = SdpProblem::new(c, a, vec![1.0, 2.0, 3.0]).unwrap();
        let l = reduce_sdp(&problem).unwrap().l;
        let z = gaussian(n, 1 + k % 3, &mut rng);
        let xt = &z * z.transpose();
        let back =
            lift_solution(lower_solution(xt.as_ref(), l.as_ref()).as_ref(), l.as_ref()).unwrap();
        worst[4] = worst[4].max(frob(&(&back - &xt)) / frob(&xt));
    }

    let limits = [1e-10, 1e-8, 1e-10, 1e-9, 1e-8];
    let pass = worst.iter().zip(&limits).all(|(w, l)| w <= l);
    line(
        "C9 oracle equivalences",
        pass,
        format!(
            "procrustes orbit {:.1e} (≤ 1e-10), eckart-young {:.1e} (≤ 1e-8), adjoint {:.1e} (≤ 1e-10), prox/projection {:.1e} (≤ 1e-9), sdp round trip {:.1e} (≤ 1e-8)",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

/// CSV or JSON text with timing fields removed.
fn untimed(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        if let Some(obj) = v.as_object_mut() {
            obj.retain(|k, _| !k.contains("seconds"));
        }
        return v.to_string();
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].contains("seconds"))
        .collect();
    let mut out = String::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        out.extend(keep.iter().map(|&i| format!("{},", &rec[i])));
        out.push('\n');
    }
    out
}

fn c10_determinism() -> Line {
    let bin = env!("CARGO_BIN_EXE_lowrank");
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("grid.toml");
    std::fs::write(
        &config,
        "n = [24]\nr = [1, 2]\nm_over_n = [1.5, 3.0]\ntrials = 4\nmethods = [\"gd\", \"svp\", \"admm\"]\n[gd]\nmu = 0.3\n[svp]\nstep = 1e-3\nmax_iters = 500\n[admm]\nmax_iters = 500\n",
    )
    .unwrap();
    let runs: [(&str, &[&str], &[&str]); 4] = [
        (
            "phase",
            &["phase", "--config", config.to_str().unwrap()],
            &["phase.csv", "trials.csv"],
        ),
        (
            "trace",
            &["trace", "--n", "40", "--m", "300", "--mu", "0.5"],
            &["trace.csv", "rate.json"],
        ),
        (
            "check",
            &["check", "mean", "--n", "20", "--trials", "5"],
            &["check_mean.json"],
        ),
        (
            "gen",
            &["gen", "--n", "30", "--r", "2", "--m", "300"],
            &[
                "instance/b.f64",
                "instance/zstar.f64",
                "instance/matrices.f64",
            ],
        ),
    ];
    let mut mismatches = Vec::new();
    for (name, args, files) in runs {
        let mut outputs = Vec::new();
        for (k, threads) in [None, None, Some("4")].into_iter().enumerate() {
            let dir = tmp.path().join(format!("{name}{k}"));
            std::fs::create_dir_all(&dir).unwrap();
            let mut cmd = Command::new(bin);
            cmd.args(["--seed", "11", "--out", dir.to_str().unwrap()]);
            if let Some(t) = threads {
                cmd.args(["--threads", t]);
            }
            let status = cmd.args(args).output().unwrap().status;
            assert!(
                status.code().is_some_and(|c| c == 0 || c == 2),
                "{name} failed: {status}"
            );
            let snapshot: Vec<String> = files
                .iter()
                .map(|f| {
                    let p = dir.join(f);
                    if f.ends_with(".f64") {
                        format!("{:?}", std::fs::read(&p).unwrap())
                    } else {
                        untimed(&p)
                    }
                })
                .collect();
            outputs.push(snapshot);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            mismatches.push(name);
        }
    }
    line(
        "C10 determinism across repeats and --threads 4",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "phase, trace, check and gen outputs identical over two runs and a 4-thread run (timing excluded)".into()
        } else {
            format!("outputs differ for {mismatches:?}")
        },
    )
}

fn monotone_descent() -> Line {
    let mut monotone = 0;
    for seed in 0..20 {
        let inst = generate_instance(100, 2, 600, EnsembleKind::Goe, 300 + seed).unwrap();
        let res = gd::solve_gd(
            &inst,
            2,
            &GdConfig {
                max_iters: 5000,
                ..GdConfig::default()
            },
        )
        .unwrap();
        if res.ascent_iterations().is_empty() {
            monotone += 1;
        }
    }
    line(
        "Invariant: monotone descent at μ=0.8",
        monotone >= 19,
        format!("n=100, r=2, m=6n dense GOE: {monotone}/20 runs never increase f (≥ 19)"),
    )
}

fn mean_estimator_at_scale() -> Line {
    let (n, m) = (20usize, 4000usize);
    let rep = check_mean_estimator(n, 1, &[m], 10, 12).unwrap();
    let rms = (((n * n + n + 2) as f64) / (2.0 * m as f64)).sqrt();
    line(
        "Example: mean estimator at m=200n",
        rep.median < 0.1,
        format!("n=20, 10 trials: median relative error {:.3} (< 0.1); second-moment prediction {rms:.3}", rep.median),
    )
}

fn main() {
    let start = Instant::now();
    let mut lines = vec![
        c1_gradient(),
        dense_recovery("C2 dense exact recovery", 400, 600.0),
        dense_recovery("C2 dense exact recovery, reduced", 100, 30.0),
        c3_linear_rate(),
    ];
    lines.extend(c4_phase());
    lines.extend([
        c5_sparse_ordering(),
        c6_mean_slope(),
        c7_init(),
        c8_regularity(),
        c9_oracles(),
        c10_determinism(),
        monotone_descent(),
        mean_estimator_at_scale(),
    ]);
    let failed: Vec<&Line> = lines.iter().filter(|l| !l.pass).collect();
    println!(
        "acceptance: {} passed, {} failed ({:.0} s)",
        lines.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    for l in &failed {
        println!("  failed: {} ({})", l.id, l.detail);
    }
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && !failed.is_empty() {
        std::process::exit(1);
    }
}
