//! Standard-form SDPs with a positive-definite cost,
//!
//! ```text
//! min trace(C X̃)  s.t.  trace(Ã_i X̃) = b_i,  X̃ ⪰ 0,
//! ```
//!
//! reduced to trace minimization over `X = Lᵀ X̃ L` with `C = L Lᵀ` and
//! `A_i = L⁻¹ Ã_i L⁻ᵀ`. Since `trace(C X̃) = trace(X)`, the reduced problem
//! is the nuclear-norm relaxation of rank minimization on the `A_i`, and
//! any of the solvers can stand in for it.
//!
//! Text format: a header `n m`, then one entry per line as
//! `mat row col value` (1-based `row`, `col`; `mat = 0` is the cost, `1..=m`
//! the constraints; symmetric entries listed once) and `b i value` for the
//! right-hand side. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::baselines::{self, AdmmConfig, SvpConfig};
use crate::dense;
use crate::error::{Error, Result};
use crate::gd::{self, GdConfig};
use crate::linalg;
use crate::measurement::{EnsembleKind, Instance, MeasurementEnsemble};
use crate::trace::SolveResult;

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub c: Mat<f64>,
    pub a_tilde: Vec<Mat<f64>>,
    pub b: Vec<f64>,
}

impl SdpProblem {
    /// Checks shapes, symmetry and positive definiteness of the cost.
    pub fn new(c: Mat<f64>, a_tilde: Vec<Mat<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = c.nrows();
        if n == 0 || c.ncols() != n {
            return Err(Error::Shape(format!(
                "cost must be square and nonempty, got {}x{}",
                n,
                c.ncols()
            )));
        }
        if a_tilde.is_empty() || a_tilde.len() != b.len() {
            return Err(Error::Shape(format!(
                "{} constraint matrices for {} right-hand sides",
                a_tilde.len(),
                b.len()
            )));
        }
        for (i, a) in a_tilde.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Shape(format!(
                    "constraint {} is {}x{}, expected {n}x{n}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
            check_symmetric(a.as_ref(), &format!("constraint {}", i + 1))?;
        }
        check_symmetric(c.as_ref(), "cost")?;
        let lowest = linalg::symmetric_eigenvalues(c.as_ref())?[0];
        if !(lowest > 0.0) {
            return Err(Error::IndefiniteCost { eigenvalue: lowest });
        }
        Ok(Self { c, a_tilde, b })
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x_tilde: MatRef<'_, f64>) -> f64 {
        dense::inner(self.c.as_ref(), x_tilde)
    }
}

fn check_symmetric(a: MatRef<'_, f64>, what: &str) -> Result<()> {
    let scale = dense::frobenius(a).max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Shape(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Output of [`reduce_sdp`].
#[derive(Debug, Clone)]
pub struct ReducedSdp {
    /// Lower-triangular Cholesky factor of the cost.
    pub l: Mat<f64>,
    pub mats: Vec<Mat<f64>>,
    pub b: Vec<f64>,
}

impl ReducedSdp {
    pub fn instance(&self) -> Result<Instance> {
        let ens = MeasurementEnsemble::from_symmetric(EnsembleKind::Explicit, &self.mats)?;
        Instance::new(ens, self.b.clone())
    }
}

fn lower_inverse(l: MatRef<'_, f64>) -> Mat<f64> {
    let mut inv = Mat::<f64>::identity(l.nrows(), l.nrows());
    solve_lower_triangular_in_place(l, inv.as_mut(), Par::Seq);
    inv
}

/// `P M Pᵀ`.
fn congruence(p: MatRef<'_, f64>, m: MatRef<'_, f64>) -> Mat<f64> {
    let mut pm = Mat::<f64>::zeros(p.nrows(), m.ncols());
    matmul(pm.as_mut(), Accum::Replace, p, m, 1.0, Par::Seq);
    let mut out = Mat::<f64>::zeros(p.nrows(), p.nrows());
    matmul(
        out.as_mut(),
        Accum::Replace,
        pm.as_ref(),
        p.transpose(),
        1.0,
        Par::Seq,
    );
    out
}

pub fn reduce_sdp(problem: &SdpProblem) -> Result<ReducedSdp> {
    let chol = problem.c.llt(Side::Lower).map_err(|_| {
        let lowest = linalg::symmetric_eigenvalues(problem.c.as_ref())
            .map(|v| v[0])
            .unwrap_or(f64::NAN);
        Error::IndefiniteCost { eigenvalue: lowest }
    })?;
    let l = chol.L().to_owned();
    let linv = lower_inverse(l.as_ref());
    let mats = problem
        .a_tilde
        .iter()
        .map(|a| dense::symmetrize(congruence(linv.as_ref(), a.as_ref()).as_ref()))
        .collect();
    Ok(ReducedSdp {
        l,
        mats,
        b: problem.b.clone(),
    })
}

/// `X̃ = L⁻ᵀ X L⁻¹`.
pub fn lift_solution(x: MatRef<'_, f64>, l: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = l.nrows();
    if l.ncols() != n || x.nrows() != n || x.ncols() != n {
        return Err(Error::Shape(format!(
            "solution {}x{} does not match factor {}x{}",
            x.nrows(),
            x.ncols(),
            n,
            l.ncols()
        )));
    }
    let linv = lower_inverse(l);
    Ok(congruence(linv.transpose(), x))
}

/// `X = Lᵀ X̃ L`, the inverse of [`lift_solution`].
pub fn lower_solution(x_tilde: MatRef<'_, f64>, l: MatRef<'_, f64>) -> Mat<f64> {
    congruence(l.transpose(), x_tilde)
}

#[derive(Debug, Clone)]
pub enum SdpMethod {
    Gd { rank: usize, config: GdConfig },
    Svp(SvpConfig),
    Admm(AdmmConfig),
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x_tilde: Mat<f64>,
    /// `trace(C X̃)`.
    pub objective: f64,
    pub result: SolveResult,
}

/// Reduces, solves the trace-minimization instance, and lifts back.
pub fn solve_sdp(problem: &SdpProblem, method: &SdpMethod) -> Result<SdpSolution> {
    let reduced = reduce_sdp(problem)?;
    let inst = reduced.instance()?;
    let result = match method {
        SdpMethod::Gd { rank, config } => gd::solve_gd(&inst, *rank, config)?,
        SdpMethod::Svp(cfg) => baselines::solve_svp(&inst, cfg)?,
        SdpMethod::Admm(cfg) => baselines::solve_nuclear_admm(&inst, cfg)?,
    };
    let x = dense::symmetrize(result.estimate.to_dense().as_ref());
    let x_tilde = dense::symmetrize(lift_solution(x.as_ref(), reduced.l.as_ref())?.as_ref());
    let objective = problem.objective(x_tilde.as_ref());
    Ok(SdpSolution {
        x_tilde,
        objective,
        result,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_owned(),
        msg: format!("line {line}: {msg}"),
    }
}

/// Parses the text format; `path` is used only in error messages.
pub fn parse_sdp(text: &str, path: &Path) -> Result<SdpProblem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing `n m` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|e| parse_err(path, hline, format!("bad header `{header}`: {e}")))
        })
        .collect::<Result<_>>()?;
    let [n, m] = dims[..] else {
        return Err(parse_err(
            path,
            hline,
            format!("header must be `n m`, got `{header}`"),
        ));
    };
    if n == 0 || m == 0 {
        return Err(parse_err(path, hline, "n and m must be positive"));
    }
    let mut c = Mat::<f64>::zeros(n, n);
    let mut a = vec![Mat::<f64>::zeros(n, n); m];
    let mut b = vec![0.0; m];
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let value = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .map_err(|e| parse_err(path, ln, format!("bad value `{t}`: {e}")))
        };
        let index = |t: &str, hi: usize, what: &str| -> Result<usize> {
            let k: usize = t
                .parse()
                .map_err(|e| parse_err(path, ln, format!("bad {what} `{t}`: {e}")))?;
            if k > hi {
                return Err(parse_err(path, ln, format!("{what} {k} out of range")));
            }
            Ok(k)
        };
        match toks[..] {
            ["b", i, v] => {
                let i = index(i, m, "constraint index")?;
                if i == 0 {
                    return Err(parse_err(path, ln, "right-hand side indices start at 1"));
                }
                b[i - 1] = value(v)?;
            }
            [k, row, col, v] => {
                let k = index(k, m, "matrix index")?;
                let (row, col) = (index(row, n, "row")?, index(col, n, "column")?);
                if row == 0 || col == 0 {
                    return Err(parse_err(path, ln, "row and column indices start at 1"));
                }
                let v = value(v)?;
                let target = if k == 0 { &mut c } else { &mut a[k - 1] };
                target[(row - 1, col - 1)] = v;
                target[(col - 1, row - 1)] = v;
            }
            _ => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected `mat row col value` or `b i value`, got `{line}`"),
                ))
            }
        }
    }
    SdpProblem::new(c, a, b)
}

pub fn read_sdp(path: &Path) -> Result<SdpProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sdp(&text, path)
}

/// Serializes to the text format (upper triangles, nonzeros only).
pub fn format_sdp(problem: &SdpProblem) -> String {
    let n = problem.n();
    let mut out = String::new();
    writeln!(out, "{} {}", n, problem.m()).unwrap();
    let mats = std::iter::once(&problem.c).chain(&problem.a_tilde);
    for (k, mat) in mats.enumerate() {
        for i in 0..n {
            for j in i..n {
                if mat[(i, j)] != 0.0 {
                    writeln!(out, "{k} {} {} {:e}", i + 1, j + 1, mat[(i, j)]).unwrap();
                }
            }
        }
    }
    for (i, v) in problem.b.iter().enumerate() {
        writeln!(out, "b {} {:e}", i + 1, v).unwrap();
    }
    out
}

pub fn write_sdp(path: &Path, problem: &SdpProblem) -> Result<()> {
    std::fs::write(path, format_sdp(problem)).map_err(|e| Error::io(path, e))
}
