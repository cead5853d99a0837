//! L2/Linf error measurement, convergence-rate studies, and the structural
//! optimality checks (supremizer ratio, Gram identity).

use std::sync::Arc;

use rand_core::SeedableRng;

use crate::assembly::{
    assemble_adjoint, assemble_adjoint_general, assemble_rhs, test_spaces, DataMode,
    DiscreteOperator, RhsOptions,
};
use crate::grid::extend_grid;
use crate::problem::TransportProblem;
use crate::quad::gauss_legendre;
use crate::solver::{post_process, solve_full, Evaluate, Solution};
use crate::{Error, Result};

/// Samples per tangential dimension for face classification in studies.
const CLASSIFY_SAMPLES: usize = 17;

/// Maps a raw 64-bit draw to [0,1) using the top 53 bits.
pub(crate) fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One convergence level: cells per dimension, errors, and the halving rate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LevelRecord {
    pub inv_h: usize,
    pub l2_error: f64,
    pub rate: Option<f64>,
    pub linf_error: Option<f64>,
}

/// A finished convergence study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorReport {
    pub problem: String,
    pub order: usize,
    pub levels: Vec<LevelRecord>,
}

impl ErrorReport {
    /// Error at a given 1/h, if that level was run.
    pub fn error_at(&self, inv_h: usize) -> Option<f64> {
        self.levels.iter().find(|l| l.inv_h == inv_h).map(|l| l.l2_error)
    }

    /// Rate at the finest level.
    pub fn final_rate(&self) -> Option<f64> {
        self.levels.last().and_then(|l| l.rate)
    }
}

/// Knobs for a study or a single solve.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// None selects constant mode for constant data, general otherwise.
    pub mode: Option<DataMode>,
    /// Outflow extension layers (0 = standard domain).
    pub extend: usize,
    pub postprocess: bool,
    /// Per-dimension cell subdivisions of the error quadrature.
    pub subdivisions: usize,
    /// Gauss points per direction; defaults to p+2.
    pub quad_order: Option<usize>,
    /// Extra uniform subdivision of rhs quadrature cells.
    pub rhs_subdiv: usize,
    pub with_linf: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            mode: None,
            extend: 0,
            postprocess: false,
            subdivisions: 4,
            quad_order: None,
            rhs_subdiv: 1,
            with_linf: false,
        }
    }
}

/// Constant mode exactly when both coefficients are constants.
pub fn auto_mode(problem: &TransportProblem) -> DataMode {
    if problem.advection.is_constant() && problem.reaction.as_constant().is_some() {
        DataMode::Constant
    } else {
        DataMode::General
    }
}

/// Assembles and solves one level, honoring extension and mode options.
pub fn solve_problem(
    problem: &TransportProblem,
    n: usize,
    p: usize,
    opts: &StudyOptions,
) -> Result<Solution> {
    let base = problem.grid(n);
    let grid = if opts.extend > 0 {
        let faces = problem.classify(&base, CLASSIFY_SAMPLES)?;
        extend_grid(&base, opts.extend, &faces)
    } else {
        base
    };
    let spaces = test_spaces(problem, &grid, p)?;
    let mode = opts.mode.unwrap_or_else(|| auto_mode(problem));
    let op = match (mode, opts.quad_order) {
        (DataMode::General, Some(q)) => assemble_adjoint_general(problem, &grid, &spaces, q)?,
        _ => assemble_adjoint(problem, &grid, &spaces, mode)?,
    };
    let rhs_opts = RhsOptions {
        q: opts.quad_order.unwrap_or(p + 2),
        subdiv: opts.rhs_subdiv,
    };
    let rhs = assemble_rhs(problem, &grid, &spaces, rhs_opts)?;
    solve_full(Arc::new(op), &rhs)
}

fn cell_in_box(grid: &crate::grid::TensorGrid, cell: &[usize], lo: &[f64], hi: &[f64]) -> bool {
    let mid = grid.cell_midpoint(cell);
    mid.iter()
        .zip(lo.iter().zip(hi))
        .all(|(m, (a, b))| *m >= *a - 1e-12 && *m <= *b + 1e-12)
}

/// L2 error over the full grid of the evaluated function.
pub fn l2_error(
    sol: &dyn Evaluate,
    exact: &dyn Fn(&[f64]) -> f64,
    subdivisions: usize,
    q: usize,
) -> Result<f64> {
    let g = sol.grid();
    let (a, b) = (g.a.clone(), g.b.clone());
    l2_error_on(sol, exact, &a, &b, subdivisions, q)
}

/// L2 error restricted to cells inside [lo, hi] (cells must align with the box).
pub fn l2_error_on(
    sol: &dyn Evaluate,
    exact: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    subdivisions: usize,
    q: usize,
) -> Result<f64> {
    let grid = sol.grid();
    let dim = grid.dim;
    let (qx, qw) = gauss_legendre(q);
    let mut total = 0.0;
    let mut idx = vec![0usize; dim];
    let n_pts = (subdivisions * q).pow(dim as u32);
    for flat in 0..grid.n_cells() {
        let cell = grid.cell_multi(flat);
        if !cell_in_box(grid, &cell, lo, hi) {
            continue;
        }
        let origin = grid.cell_origin(&cell);
        for kp in 0..n_pts {
            let mut rest = kp;
            for d in (0..dim).rev() {
                idx[d] = rest % (subdivisions * q);
                rest /= subdivisions * q;
            }
            let mut x = vec![0.0; dim];
            let mut w = 1.0;
            for d in 0..dim {
                let (sub, pt) = (idx[d] / q, idx[d] % q);
                let hsub = grid.h(d) / subdivisions as f64;
                let x0 = origin[d] + sub as f64 * hsub;
                x[d] = x0 + 0.5 * hsub * (qx[pt] + 1.0);
                w *= 0.5 * hsub * qw[pt];
            }
            let diff = sol.eval_at(&x)? - exact(&x);
            total += w * diff * diff;
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Max |u - exact| over the closed 4x-refined lattice of every cell, corners
/// included (boundary constraints show up at the corners themselves).
pub fn linf_error(sol: &dyn Evaluate, exact: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    let g = sol.grid();
    let (a, b) = (g.a.clone(), g.b.clone());
    linf_error_on(sol, exact, &a, &b)
}

/// Linf error restricted to cells inside [lo, hi].
pub fn linf_error_on(
    sol: &dyn Evaluate,
    exact: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
) -> Result<f64> {
    const REFINE: usize = 4;
    let grid = sol.grid();
    let dim = grid.dim;
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; dim];
    let n_pts = (REFINE + 1).pow(dim as u32);
    for flat in 0..grid.n_cells() {
        let cell = grid.cell_multi(flat);
        if !cell_in_box(grid, &cell, lo, hi) {
            continue;
        }
        let origin = grid.cell_origin(&cell);
        for kp in 0..n_pts {
            let mut rest = kp;
            for d in (0..dim).rev() {
                idx[d] = rest % (REFINE + 1);
                rest /= REFINE + 1;
            }
            let mut x = vec![0.0; dim];
            for d in 0..dim {
                x[d] = (origin[d] + grid.h(d) * idx[d] as f64 / REFINE as f64)
                    .min(grid.b[d]);
            }
            worst = worst.max((sol.eval_at(&x)? - exact(&x)).abs());
        }
    }
    Ok(worst)
}

/// Runs solve + error measurement over a list of levels and computes rates.
pub fn convergence_study(
    problem: &TransportProblem,
    levels: &[usize],
    p: usize,
    opts: &StudyOptions,
) -> Result<ErrorReport> {
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::BadInput(format!("problem '{}' has no exact solution", problem.name)))?;
    let q = opts.quad_order.unwrap_or(p + 2);
    let mut records: Vec<LevelRecord> = Vec::with_capacity(levels.len());
    for (i, &n) in levels.iter().enumerate() {
        let sol = solve_problem(problem, n, p, opts)?;
        let post;
        let eval: &dyn Evaluate = if opts.postprocess {
            post = post_process(&sol, None)?;
            &post
        } else {
            &sol
        };
        let (lo, hi) = (&problem.domain.0, &problem.domain.1);
        let l2 = l2_error_on(eval, &|x: &[f64]| exact(x), lo, hi, opts.subdivisions, q)?;
        let linf = if opts.with_linf {
            Some(linf_error_on(eval, &|x: &[f64]| exact(x), lo, hi)?)
        } else {
            None
        };
        let rate = if i > 0 && n == 2 * levels[i - 1] && l2 > 0.0 {
            Some((records[i - 1].l2_error / l2).log2())
        } else {
            None
        };
        records.push(LevelRecord { inv_h: n, l2_error: l2, rate, linf_error: linf });
    }
    Ok(ErrorReport {
        problem: problem.name.clone(),
        order: p,
        levels: records,
    })
}

/// Outcome of the structural optimality checks.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimalityReport {
    pub trials: usize,
    /// Max |ratio - 1| of the supremizer quotient over random test directions.
    pub max_supremizer_deviation: f64,
    /// Max |Y - quadrature Gram| relative to max |Y|; constant mode only.
    pub gram_identity_gap: Option<f64>,
}

/// Supremizer quotient sqrt(||B*v||^2 / v^T Y v) for one direction.
fn supremizer_ratio(op: &DiscreteOperator, v: &[f64]) -> f64 {
    let den: f64 = {
        let yv = op.gram.mul_vec(v);
        v.iter().zip(&yv).map(|(a, b)| a * b).sum()
    };
    let num = match &op.bstar {
        Some(b) => {
            let bv = b.mul_vec(v);
            let mb = op.mass.mul_vec(&bv);
            bv.iter().zip(&mb).map(|(a, b)| a * b).sum::<f64>()
        }
        None => general_broken_norm_sq(op, v),
    };
    (num / den).sqrt()
}

/// Quadrature of (B*v)^2 for general data, one order above assembly.
fn general_broken_norm_sq(op: &DiscreteOperator, v: &[f64]) -> f64 {
    let grid = &op.grid;
    let dim = grid.dim;
    let p = op.spaces[0].p;
    let q = p + 3;
    let (qx, qw) = gauss_legendre(q);
    let w_broken = op.embed.mul_vec(v);
    let dw: Vec<Vec<f64>> = op.deriv.iter().map(|d| d.mul_vec(v)).collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; dim];
    let n_pts = q.pow(dim as u32);
    for flat in 0..grid.n_cells() {
        let cell = grid.cell_multi(flat);
        let origin = grid.cell_origin(&cell);
        for kp in 0..n_pts {
            let mut rest = kp;
            for d in (0..dim).rev() {
                idx[d] = rest % q;
                rest /= q;
            }
            let mut x = vec![0.0; dim];
            let mut w = 1.0;
            for d in 0..dim {
                x[d] = origin[d] + 0.5 * grid.h(d) * (qx[idx[d]] + 1.0);
                w *= 0.5 * grid.h(d) * qw[idx[d]];
            }
            let b = op.problem.advection.eval(&x);
            let zeroth = op.problem.reaction.eval(&x) - op.problem.advection.divergence(&x);
            let mut s = zeroth
                * crate::assembly::eval_broken(grid, &op.spaces, &w_broken, &x).unwrap();
            for (d, bd) in b.iter().enumerate() {
                s -= bd * crate::assembly::eval_broken(grid, &op.spaces, &dw[d], &x).unwrap();
            }
            total += w * s * s;
        }
    }
    total
}

/// Runs the supremizer-ratio test for random directions and, in constant mode,
/// cross-checks the Gram matrix against quadrature assembly.
pub fn check_optimality(op: &DiscreteOperator, trials: usize, seed: u64) -> OptimalityReport {
    use rand_core::RngCore;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let n = op.n_test();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v: Vec<f64> = (0..n).map(|_| 2.0 * unit_f64(rng.next_u64()) - 1.0).collect();
        if v.iter().all(|x| *x == 0.0) {
            continue;
        }
        worst = worst.max((supremizer_ratio(op, &v) - 1.0).abs());
    }
    let gram_identity_gap = if op.mode == DataMode::Constant && op.grid.n_cells() <= 20_000 {
        let p = op.spaces[0].p;
        assemble_adjoint_general(&op.problem, &op.grid, &op.spaces, p + 2)
            .ok()
            .map(|g| {
                let diff = crate::assembly::CsrMatrix::linear_combination(&[
                    (1.0, &op.gram),
                    (-1.0, &g.gram),
                ]);
                diff.max_abs() / op.gram.max_abs().max(1e-300)
            })
    } else {
        None
    };
    OptimalityReport {
        trials,
        max_supremizer_deviation: worst,
        gram_identity_gap,
    }
}
