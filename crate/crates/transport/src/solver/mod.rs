//! Normal-equation solves Y w = f, trial reconstruction u = B*w, pointwise
//! evaluation, and the derivative-projection post-processing.

pub mod linalg;

use std::sync::Arc;

use crate::assembly::{broken_midpoint_values, eval_broken, DataMode, DiscreteOperator};
use crate::fe1d::lagrange_values;
use crate::grid::TensorGrid;
use crate::{Error, Result};

/// Anything evaluable pointwise on a tensor grid.
pub trait Evaluate {
    fn grid(&self) -> &TensorGrid;
    fn eval_at(&self, x: &[f64]) -> Result<f64>;
}

/// Solver bookkeeping attached to a solution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostics {
    pub n_test: usize,
    pub n_broken: usize,
    pub method: String,
    pub residual_rel: Option<f64>,
}

/// A full-order solution: test coefficients w and the trial function u = B*w.
pub struct Solution {
    pub op: Arc<DiscreteOperator>,
    pub w: Vec<f64>,
    /// Broken coefficients of u; None in general mode, where u is evaluated
    /// by applying the data to w pointwise.
    pub u_broken: Option<Vec<f64>>,
    w_broken: Vec<f64>,
    dw_broken: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Solution {
    /// Builds the trial representation for already-known test coefficients.
    pub fn from_coefficients(op: Arc<DiscreteOperator>, w: Vec<f64>) -> Solution {
        let w_broken = op.embed.mul_vec(&w);
        let dw_broken: Vec<Vec<f64>> = op.deriv.iter().map(|d| d.mul_vec(&w)).collect();
        let u_broken = op.bstar.as_ref().map(|b| b.mul_vec(&w));
        let diagnostics = Diagnostics {
            n_test: op.n_test(),
            n_broken: op.n_broken(),
            method: "coefficients".to_string(),
            residual_rel: None,
        };
        Solution { op, w, u_broken, w_broken, dw_broken, diagnostics }
    }

    /// L2 norm of u via the broken mass matrix (matrix modes only).
    pub fn l2_norm(&self) -> Option<f64> {
        let u = self.u_broken.as_ref()?;
        let mu = self.op.mass.mul_vec(u);
        Some(u.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
    }
}

impl Evaluate for Solution {
    fn grid(&self) -> &TensorGrid {
        &self.op.grid
    }

    fn eval_at(&self, x: &[f64]) -> Result<f64> {
        match &self.u_broken {
            Some(u) => eval_broken(&self.op.grid, &self.op.spaces, u, x),
            None => {
                let p = &self.op.problem;
                let b = p.advection.eval(x);
                let zeroth = p.reaction.eval(x) - p.advection.divergence(x);
                let mut s =
                    zeroth * eval_broken(&self.op.grid, &self.op.spaces, &self.w_broken, x)?;
                for (d, bd) in b.iter().enumerate() {
                    s -= bd
                        * eval_broken(&self.op.grid, &self.op.spaces, &self.dw_broken[d], x)?;
                }
                Ok(s)
            }
        }
    }
}

/// Solves Y w = f and reconstructs the trial solution.
pub fn solve_full(op: Arc<DiscreteOperator>, rhs: &[f64]) -> Result<Solution> {
    let mut sols = solve_full_many(op, std::slice::from_ref(&rhs.to_vec()))?;
    Ok(sols.pop().unwrap())
}

/// Solves several right-hand sides against one shared factorization.
pub fn solve_full_many(op: Arc<DiscreteOperator>, rhss: &[Vec<f64>]) -> Result<Vec<Solution>> {
    let n = op.n_test();
    for rhs in rhss {
        if rhs.len() != n {
            return Err(Error::BadInput(format!(
                "rhs length {} does not match the {} test DOFs",
                rhs.len(),
                n
            )));
        }
    }
    let fac = linalg::factorize(&op.gram)?;
    let mut out = Vec::with_capacity(rhss.len());
    for rhs in rhss {
        let w = fac.solve(rhs)?;
        let yw = op.gram.mul_vec(&w);
        let rnorm: f64 = yw
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let fnorm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut sol = Solution::from_coefficients(op.clone(), w);
        sol.diagnostics.method = fac.method();
        sol.diagnostics.residual_rel = Some(if fnorm > 0.0 { rnorm / fnorm } else { rnorm });
        out.push(sol);
    }
    Ok(out)
}

/// A solution with derivative terms projected one order lower on selected cells.
pub struct PostProcessedSolution {
    pub op: Arc<DiscreteOperator>,
    /// Broken coefficients of the limited trial function.
    pub u_tilde: Vec<f64>,
    /// Per-cell flags (flat cell order): true where the projection was applied.
    pub processed: Vec<bool>,
}

impl Evaluate for PostProcessedSolution {
    fn grid(&self) -> &TensorGrid {
        &self.op.grid
    }

    fn eval_at(&self, x: &[f64]) -> Result<f64> {
        eval_broken(&self.op.grid, &self.op.spaces, &self.u_tilde, x)
    }
}

/// Nodal matrix of the L2 projection from order-p onto order-(p-1) polynomials
/// on the reference cell, expressed back in the order-p nodal basis.
pub fn projection_matrix(p: usize) -> Vec<f64> {
    let (qx, qw) = crate::quad::gauss_legendre(p + 2);
    let np = p + 1;
    let mut lowmass = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut cross = nalgebra::DMatrix::<f64>::zeros(p, np);
    for (x, w) in qx.iter().zip(&qw) {
        let t = 0.5 * (x + 1.0);
        let hi = lagrange_values(p, t);
        let lo = lagrange_values(p - 1, t);
        for i in 0..p {
            for j in 0..p {
                lowmass[(i, j)] += 0.5 * w * lo[i] * lo[j];
            }
            for j in 0..np {
                cross[(i, j)] += 0.5 * w * lo[i] * hi[j];
            }
        }
    }
    let coeffs = lowmass.lu().solve(&cross).unwrap();
    // Evaluate the projected polynomial at the order-p nodes.
    let mut out = vec![0.0; np * np];
    for (i, row) in out.chunks_mut(np).enumerate() {
        let at = lagrange_values(p - 1, i as f64 / p as f64);
        for j in 0..np {
            let mut s = 0.0;
            for k in 0..p {
                s += at[k] * coeffs[(k, j)];
            }
            row[j] = s;
        }
    }
    out
}

/// Applies the tensor projection along every dimension of one local block.
fn project_local(block: &mut [f64], p: usize, dim: usize, proj: &[f64]) {
    let np = p + 1;
    let n_local = np.pow(dim as u32);
    let mut tmp = vec![0.0; n_local];
    for d in 0..dim {
        // Stride of index d in the dim-major local layout.
        let stride = np.pow((dim - 1 - d) as u32);
        tmp.copy_from_slice(block);
        for lm in 0..n_local {
            let md = (lm / stride) % np;
            let base = lm - md * stride;
            let mut s = 0.0;
            for k in 0..np {
                s += proj[md * np + k] * tmp[base + k * stride];
            }
            block[lm] = s;
        }
    }
}

/// Projects the derivative terms of u to order p-1 on the selected cells
/// (all cells when `cells` is None) and reassembles the trial function.
pub fn post_process(sol: &Solution, cells: Option<&[usize]>) -> Result<PostProcessedSolution> {
    let op = &sol.op;
    let p = op.spaces[0].p;
    if p < 2 {
        return Err(Error::OrderTooLow { p });
    }
    if op.mode == DataMode::General {
        return Err(Error::BadInput(
            "post-processing requires constant or piecewise-constant data".into(),
        ));
    }
    let grid = &op.grid;
    let dim = grid.dim;
    let mut processed = vec![cells.is_none(); grid.n_cells()];
    if let Some(list) = cells {
        for &c in list {
            processed[c] = true;
        }
    }
    let proj = projection_matrix(p);
    let np = p + 1;
    let n_local = np.pow(dim as u32);
    let radix: Vec<usize> = op.spaces.iter().map(|s| s.n_broken()).collect();

    // Flat broken indices of one cell's local block, dim-major.
    let local_indices = |cell: &[usize]| -> Vec<usize> {
        let mut out = Vec::with_capacity(n_local);
        for lm in 0..n_local {
            let mut rest = lm;
            let mut m = vec![0usize; dim];
            for d in (0..dim).rev() {
                m[d] = rest % np;
                rest /= np;
            }
            let mut flat = 0usize;
            for d in 0..dim {
                flat = flat * radix[d] + cell[d] * np + m[d];
            }
            out.push(flat);
        }
        out
    };

    let mut dtilde: Vec<Vec<f64>> = sol.dw_broken.clone();
    let mut block = vec![0.0; n_local];
    for flat in 0..grid.n_cells() {
        if !processed[flat] {
            continue;
        }
        let cell = grid.cell_multi(flat);
        let idx = local_indices(&cell);
        for dt in dtilde.iter_mut() {
            for (slot, &j) in block.iter_mut().zip(&idx) {
                *slot = dt[j];
            }
            project_local(&mut block, p, dim, &proj);
            for (&j, &v) in idx.iter().zip(&block) {
                dt[j] = v;
            }
        }
    }

    // Recombine with the data; the reaction term keeps the unprojected w.
    let n_broken = op.n_broken();
    let mut u_tilde = vec![0.0; n_broken];
    match op.mode {
        DataMode::Constant => {
            let b = match &op.problem.advection {
                crate::problem::Advection::Constant(b) => b.clone(),
                _ => unreachable!(),
            };
            let c = op.problem.reaction.as_constant().unwrap();
            for j in 0..n_broken {
                let mut s = c * sol.w_broken[j];
                for (d, bd) in b.iter().enumerate() {
                    s -= bd * dtilde[d][j];
                }
                u_tilde[j] = s;
            }
        }
        DataMode::PiecewiseConstant => {
            let adv = &op.problem.advection;
            let bvals: Vec<Vec<f64>> = (0..dim)
                .map(|d| broken_midpoint_values(grid, &op.spaces, |x| adv.eval(x)[d]))
                .collect();
            let cvals =
                broken_midpoint_values(grid, &op.spaces, |x| op.problem.reaction.eval(x));
            for j in 0..n_broken {
                let mut s = cvals[j] * sol.w_broken[j];
                for (d, bv) in bvals.iter().enumerate() {
                    s -= bv[j] * dtilde[d][j];
                }
                u_tilde[j] = s;
            }
        }
        DataMode::General => unreachable!(),
    }
    Ok(PostProcessedSolution { op: op.clone(), u_tilde, processed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_adjoint, assemble_rhs, test_spaces, RhsOptions};
    use crate::problem::catalog;

    fn solve_catalog(name: &str, n: usize, p: usize, mode: DataMode) -> Solution {
        let prob = catalog(name).unwrap().problem;
        let grid = prob.grid(n);
        let spaces = test_spaces(&prob, &grid, p).unwrap();
        let op = Arc::new(assemble_adjoint(&prob, &grid, &spaces, mode).unwrap());
        let rhs = assemble_rhs(&prob, &grid, &spaces, RhsOptions::for_order(p)).unwrap();
        solve_full(op, &rhs).unwrap()
    }

    #[test]
    fn homogeneous_problem_solves_to_zero() {
        let prob = {
            let mut p = catalog("1d-decay").unwrap().problem;
            p.inflow_data = Arc::new(|_: &[f64]| 0.0);
            p
        };
        let grid = prob.grid(4);
        let spaces = test_spaces(&prob, &grid, 1).unwrap();
        let op = Arc::new(assemble_adjoint(&prob, &grid, &spaces, DataMode::Constant).unwrap());
        let rhs = assemble_rhs(&prob, &grid, &spaces, RhsOptions::for_order(1)).unwrap();
        let sol = solve_full(op, &rhs).unwrap();
        assert!(sol.w.iter().all(|v| v.abs() < 1e-14));
        assert!(sol.u_broken.unwrap().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn unit_source_yields_cell_averages_of_x() {
        // b=1, c=0, f=1, g=0 on two cells: u is the L2-best piecewise-constant
        // approximation of the exact solution x, namely the cell averages.
        let mut prob = catalog("1d-decay").unwrap().problem;
        prob.reaction = crate::problem::Coefficient::Constant(0.0);
        prob.source = crate::problem::Coefficient::Constant(1.0);
        prob.inflow_data = Arc::new(|_: &[f64]| 0.0);
        let grid = prob.grid(2);
        let spaces = test_spaces(&prob, &grid, 1).unwrap();
        let op = Arc::new(assemble_adjoint(&prob, &grid, &spaces, DataMode::Constant).unwrap());
        let rhs = assemble_rhs(&prob, &grid, &spaces, RhsOptions::for_order(1)).unwrap();
        let sol = solve_full(op.clone(), &rhs).unwrap();
        assert!((sol.eval_at(&[0.2]).unwrap() - 0.25).abs() < 1e-12);
        assert!((sol.eval_at(&[0.7]).unwrap() - 0.75).abs() < 1e-12);

        // Dense oracle for the same normal equations.
        let n = op.n_test();
        let yd = nalgebra::DMatrix::from_fn(n, n, |i, j| op.gram.get(i, j));
        let wd = yd
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_column_slice(&rhs));
        for i in 0..n {
            assert!((sol.w[i] - wd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_is_reported_small() {
        let sol = solve_catalog("2d-const", 8, 1, DataMode::Constant);
        assert!(sol.diagnostics.residual_rel.unwrap() < 1e-10);
        assert!(sol.diagnostics.method.starts_with("cholesky"));
    }

    #[test]
    fn dual_residual_norm_equals_broken_norm_of_perturbation() {
        // sqrt(r^T Y^{-1} r) = ||B* dw||_L2 for r = Y dw.
        let sol = solve_catalog("2d-const", 6, 2, DataMode::Constant);
        let op = &sol.op;
        let n = op.n_test();
        let dw: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.83).sin()).collect();
        let r = op.gram.mul_vec(&dw);
        let z = linalg::factorize(&op.gram).unwrap().solve(&r).unwrap();
        let dual: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().sqrt();
        let bdw = op.bstar.as_ref().unwrap().mul_vec(&dw);
        let mb = op.mass.mul_vec(&bdw);
        let broken: f64 = bdw.iter().zip(&mb).map(|(a, b)| a * b).sum::<f64>().sqrt();
        assert!((dual - broken).abs() < 1e-10 * broken.max(1.0), "{dual} vs {broken}");
    }

    #[test]
    fn general_mode_evaluation_matches_constant_mode() {
        let a = solve_catalog("2d-const", 6, 1, DataMode::Constant);
        let b = solve_catalog("2d-const", 6, 1, DataMode::General);
        for &x in &[[0.13, 0.41], [0.52, 0.07], [0.97, 0.66]] {
            let ua = a.eval_at(&x).unwrap();
            let ub = b.eval_at(&x).unwrap();
            assert!((ua - ub).abs() < 1e-12, "at {x:?}: {ua} vs {ub}");
        }
    }

    #[test]
    fn out_of_domain_evaluation_fails() {
        let sol = solve_catalog("1d-decay", 4, 1, DataMode::Constant);
        assert!(matches!(
            sol.eval_at(&[1.5]),
            Err(Error::PointOutOfDomain { .. })
        ));
    }

    #[test]
    fn projection_matrix_is_idempotent_and_reduces_degree() {
        let p = 2;
        let proj = projection_matrix(p);
        // Frozen values: projecting t^2 onto degree <= 1 gives t - 1/6,
        // nodal values (-1/6, 1/3, 5/6).
        let t2 = [0.0, 0.25, 1.0];
        let out: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| proj[i * 3 + j] * t2[j]).sum())
            .collect();
        let expect = [-1.0 / 6.0, 1.0 / 3.0, 5.0 / 6.0];
        for (o, e) in out.iter().zip(&expect) {
            assert!((o - e).abs() < 1e-13, "{out:?}");
        }
        // Linear polynomials are fixed points.
        let lin = [0.2, 0.45, 0.7];
        let out2: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| proj[i * 3 + j] * lin[j]).sum())
            .collect();
        for (o, e) in out2.iter().zip(&lin) {
            assert!((o - e).abs() < 1e-13);
        }
    }

    #[test]
    fn post_processing_with_no_cells_is_identity() {
        let sol = solve_catalog("2d-g3", 8, 2, DataMode::Constant);
        let post = post_process(&sol, Some(&[])).unwrap();
        let u = sol.u_broken.as_ref().unwrap();
        for (a, b) in u.iter().zip(&post.u_tilde) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(post.processed.iter().all(|&f| !f));
    }

    #[test]
    fn post_processing_touches_only_selected_cells() {
        let sol = solve_catalog("2d-g3", 4, 2, DataMode::Constant);
        let post = post_process(&sol, Some(&[5])).unwrap();
        let full = post_process(&sol, None).unwrap();
        let u = sol.u_broken.as_ref().unwrap();
        let grid = &sol.op.grid;
        let np = 3usize;
        let radix: Vec<usize> = sol.op.spaces.iter().map(|s| s.n_broken()).collect();
        for flat in 0..grid.n_cells() {
            let cell = grid.cell_multi(flat);
            for lm in 0..np * np {
                let (m0, m1) = (lm / np, lm % np);
                let j = (cell[0] * np + m0) * radix[1] + cell[1] * np + m1;
                if flat == 5 {
                    assert!((post.u_tilde[j] - full.u_tilde[j]).abs() < 1e-14);
                } else {
                    assert!((post.u_tilde[j] - u[j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn post_processing_leaves_reaction_term_alone() {
        // With identical w, the post-processing correction is independent of c.
        let prob0 = {
            let mut p = catalog("2d-g3").unwrap().problem;
            p.reaction = crate::problem::Coefficient::Constant(0.0);
            p
        };
        let prob5 = {
            let mut p = catalog("2d-g3").unwrap().problem;
            p.reaction = crate::problem::Coefficient::Constant(5.0);
            p
        };
        let grid = prob0.grid(4);
        let spaces = test_spaces(&prob0, &grid, 2).unwrap();
        let op0 = Arc::new(assemble_adjoint(&prob0, &grid, &spaces, DataMode::Constant).unwrap());
        let op5 = Arc::new(assemble_adjoint(&prob5, &grid, &spaces, DataMode::Constant).unwrap());
        let n = op0.n_test();
        let w: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.29).sin()).collect();
        let s0 = Solution::from_coefficients(op0, w.clone());
        let s5 = Solution::from_coefficients(op5, w);
        let p0 = post_process(&s0, None).unwrap();
        let p5 = post_process(&s5, None).unwrap();
        let u0 = s0.u_broken.as_ref().unwrap();
        let u5 = s5.u_broken.as_ref().unwrap();
        for j in 0..u0.len() {
            let c0 = p0.u_tilde[j] - u0[j];
            let c5 = p5.u_tilde[j] - u5[j];
            assert!((c0 - c5).abs() < 1e-12);
        }
    }

    #[test]
    fn post_processing_requires_quadratic_order() {
        let sol = solve_catalog("2d-g3", 4, 1, DataMode::Constant);
        assert!(matches!(post_process(&sol, None), Err(Error::OrderTooLow { p: 1 })));
    }
}
