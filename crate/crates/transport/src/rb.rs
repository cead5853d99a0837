//! Reduced-basis layer: offline blocks under the affine decomposition, online
//! N x N solves, the strong greedy loop, snapshot reproduction, and the
//! hierarchical error estimator.

use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{
    assemble_adjoint, assemble_mass, assemble_operator_part, assemble_rhs, assemble_rhs_part,
    CsrMatrix, DataMode, RhsOptions,
};
use crate::fe1d::Fe1D;
use crate::grid::TensorGrid;
use crate::problem::{instantiate, AffineDecomposition, ThetaForm, TransportProblem};
use crate::solver::solve_full;
use crate::{Error, Result};

/// Condition cap of the snapshot Gram matrix in the mu-bar inner product.
pub const BASIS_CONDITION_CAP: f64 = 1e12;

const MODEL_MAGIC: &[u8; 8] = b"RBMODEL1";

/// Offline-precomputed reduced model.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub problem: String,
    pub dim: usize,
    /// Cells per dimension of the (square) full-order grid.
    pub n_h: usize,
    pub p: usize,
    pub n_y: usize,
    pub n_broken: usize,
    /// Operator parameter forms with their fixed scales.
    pub theta_b: Vec<(ThetaForm, f64)>,
    /// Rhs parameter forms with their fixed scales.
    pub theta_f: Vec<(ThetaForm, f64)>,
    pub parameter_box: (f64, f64),
    /// Greedy train tolerance the model was built with.
    pub epsilon: f64,
    pub mu_bar: f64,
    /// Selected parameters, in greedy order.
    pub selected: Vec<f64>,
    /// Train-set indices of the selected parameters.
    pub selected_idx: Vec<usize>,
    /// Snapshot test coefficients, one column per basis function.
    pub w_cols: Vec<Vec<f64>>,
    /// Applied-basis columns (B^q)* v_i, indexed [q][i].
    pub b_cols: Vec<Vec<Vec<f64>>>,
    /// Gram blocks (b_{q1,i}, b_{q2,j})_L2, indexed [q1*Q_b+q2], row-major N x N.
    pub a_blocks: Vec<Vec<f64>>,
    /// Rhs blocks f^q(v_i), indexed [q][i].
    pub f_blocks: Vec<Vec<f64>>,
}

/// One greedy iteration: basis size before extension, the max train error,
/// and the selected parameter if the basis was extended.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GreedyStep {
    pub n_basis: usize,
    pub max_error: f64,
    pub mu_star: Option<f64>,
    pub mu_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyStatus {
    Converged,
    TrainExhausted,
    Stalled,
}

/// Record of a strong-greedy run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    pub status: GreedyStatus,
}

impl ReducedModel {
    pub fn n(&self) -> usize {
        self.w_cols.len()
    }

    pub fn q_b(&self) -> usize {
        self.theta_b.len()
    }

    pub fn q_f(&self) -> usize {
        self.theta_f.len()
    }

    pub fn theta_b_at(&self, mu: f64) -> Vec<f64> {
        self.theta_b.iter().map(|(t, s)| s * t.eval(mu)).collect()
    }

    pub fn theta_f_at(&self, mu: f64) -> Vec<f64> {
        self.theta_f.iter().map(|(t, s)| s * t.eval(mu)).collect()
    }

    /// Reduced Gram matrix A^N_mu assembled from the blocks.
    pub fn reduced_gram(&self, mu: f64) -> nalgebra::DMatrix<f64> {
        self.reduced_gram_truncated(mu, self.n())
    }

    fn reduced_gram_truncated(&self, mu: f64, n: usize) -> nalgebra::DMatrix<f64> {
        let full = self.n();
        let tb = self.theta_b_at(mu);
        let qb = self.q_b();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for q1 in 0..qb {
            for q2 in 0..qb {
                let block = &self.a_blocks[q1 * qb + q2];
                let c = tb[q1] * tb[q2];
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] += c * block[i * full + j];
                    }
                }
            }
        }
        a
    }

    fn reduced_rhs_truncated(&self, mu: f64, n: usize) -> Vec<f64> {
        let tf = self.theta_f_at(mu);
        let mut f = vec![0.0; n];
        for (t, block) in tf.iter().zip(&self.f_blocks) {
            for i in 0..n {
                f[i] += t * block[i];
            }
        }
        f
    }

    /// u^N broken coefficients from the applied-basis blocks.
    pub fn reconstruct(&self, w: &[f64], mu: f64) -> Vec<f64> {
        let tb = self.theta_b_at(mu);
        let mut u = vec![0.0; self.n_broken];
        for (t, cols) in tb.iter().zip(&self.b_cols) {
            for (wi, col) in w.iter().zip(cols) {
                let c = t * wi;
                for (slot, v) in u.iter_mut().zip(col) {
                    *slot += c * v;
                }
            }
        }
        u
    }

    /// Keeps the leading n basis functions (greedy prefix).
    pub fn truncate(&self, n: usize) -> ReducedModel {
        let full = self.n();
        let n = n.min(full);
        let qb = self.q_b();
        let mut a_blocks = Vec::with_capacity(qb * qb);
        for block in &self.a_blocks {
            let mut small = vec![0.0; n * n];
            for i in 0..n {
                small[i * n..(i + 1) * n].copy_from_slice(&block[i * full..i * full + n]);
            }
            a_blocks.push(small);
        }
        ReducedModel {
            selected: self.selected.iter().take(n).copied().collect(),
            selected_idx: self.selected_idx.iter().take(n).copied().collect(),
            w_cols: self.w_cols[..n].to_vec(),
            b_cols: self.b_cols.iter().map(|c| c[..n].to_vec()).collect(),
            a_blocks,
            f_blocks: self.f_blocks.iter().map(|f| f[..n].to_vec()).collect(),
            ..self.clone()
        }
    }
}

/// Result of an online solve.
pub struct OnlineSolution {
    pub w: Vec<f64>,
    /// Broken coefficients of u^N; present when reconstruction was requested.
    pub u_broken: Option<Vec<f64>>,
}

/// Solves the N x N reduced system at mu.
pub fn online_solve(model: &ReducedModel, mu: f64, reconstruct: bool) -> Result<OnlineSolution> {
    let n = model.n();
    if n == 0 {
        return Err(Error::SingularReducedSystem { n: 0 });
    }
    let a = model.reduced_gram(mu);
    let f = model.reduced_rhs_truncated(mu, n);
    let chol = a
        .cholesky()
        .ok_or(Error::SingularReducedSystem { n })?;
    let w = chol.solve(&nalgebra::DVector::from_column_slice(&f));
    let w: Vec<f64> = w.iter().cloned().collect();
    let u_broken = reconstruct.then(|| model.reconstruct(&w, mu));
    Ok(OnlineSolution { w, u_broken })
}

fn square_cells(grid: &TensorGrid) -> Result<usize> {
    let n = grid.n_h[0];
    if grid.n_h.iter().any(|&m| m != n) {
        return Err(Error::BadInput(
            "reduced models require the same cell count in every dimension".into(),
        ));
    }
    Ok(n)
}

/// Assembles all parameter-independent blocks for the given snapshot columns.
pub fn offline_assemble(
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    w_cols: &[Vec<f64>],
    opts: RhsOptions,
) -> Result<ReducedModel> {
    let parts: Vec<CsrMatrix> = affine
        .operator
        .iter()
        .map(|c| assemble_operator_part(c.part, grid, spaces))
        .collect::<Result<_>>()?;
    let rhs_vecs: Vec<Vec<f64>> = affine
        .rhs
        .iter()
        .map(|c| assemble_rhs_part(problem, grid, spaces, c.part, opts))
        .collect::<Result<_>>()?;
    let mass = assemble_mass(spaces);
    let mut model = empty_model(problem, affine, grid, spaces)?;
    for w in w_cols {
        extend_blocks(&mut model, &parts, &rhs_vecs, &mass, w, f64::NAN, usize::MAX);
    }
    model.selected.clear();
    model.selected_idx.clear();
    Ok(model)
}

fn empty_model(
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
) -> Result<ReducedModel> {
    let n_h = square_cells(grid)?;
    let qb = affine.operator.len();
    Ok(ReducedModel {
        problem: problem.name.clone(),
        dim: grid.dim,
        n_h,
        p: spaces[0].p,
        n_y: spaces.iter().map(|s| s.n_test()).product(),
        n_broken: spaces.iter().map(|s| s.n_broken()).product(),
        theta_b: affine.operator.iter().map(|c| (c.theta, c.scale)).collect(),
        theta_f: affine.rhs.iter().map(|c| (c.theta, c.scale)).collect(),
        parameter_box: affine.parameter_box,
        epsilon: 0.0,
        mu_bar: affine.mu_bar(),
        selected: Vec::new(),
        selected_idx: Vec::new(),
        w_cols: Vec::new(),
        b_cols: vec![Vec::new(); qb],
        a_blocks: vec![Vec::new(); qb * qb],
        f_blocks: vec![Vec::new(); affine.rhs.len()],
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Grows every block by one snapshot column; a_blocks are kept at a stride
/// equal to the new basis size by rebuilding rows.
fn extend_blocks(
    model: &mut ReducedModel,
    parts: &[CsrMatrix],
    rhs_vecs: &[Vec<f64>],
    mass: &CsrMatrix,
    w: &[f64],
    mu: f64,
    mu_index: usize,
) {
    let n_old = model.n();
    let qb = model.q_b();
    let b_new: Vec<Vec<f64>> = parts.iter().map(|p| p.mul_vec(w)).collect();
    let mb_new: Vec<Vec<f64>> = b_new.iter().map(|b| mass.mul_vec(b)).collect();
    // mb for existing columns is recomputed lazily per dot through b_cols of
    // the other factor; keep M b_j for the new column only.
    let mut a_blocks = Vec::with_capacity(qb * qb);
    for q1 in 0..qb {
        for q2 in 0..qb {
            let old = &model.a_blocks[q1 * qb + q2];
            let n_new = n_old + 1;
            let mut block = vec![0.0; n_new * n_new];
            for i in 0..n_old {
                block[i * n_new..i * n_new + n_old]
                    .copy_from_slice(&old[i * n_old..(i + 1) * n_old]);
                block[i * n_new + n_old] = dot(&model.b_cols[q1][i], &mb_new[q2]);
            }
            for j in 0..n_old {
                block[n_old * n_new + j] = dot(&b_new[q1], &mass.mul_vec(&model.b_cols[q2][j]));
            }
            block[n_old * n_new + n_old] = dot(&b_new[q1], &mb_new[q2]);
            a_blocks.push(block);
        }
    }
    model.a_blocks = a_blocks;
    for (q, b) in b_new.into_iter().enumerate() {
        model.b_cols[q].push(b);
    }
    for (fq, vec_q) in model.f_blocks.iter_mut().zip(rhs_vecs) {
        fq.push(dot(vec_q, w));
    }
    model.w_cols.push(w.to_vec());
    model.selected.push(mu);
    model.selected_idx.push(mu_index);
}

/// A cached full-order solve at one parameter.
struct FullSolve {
    w: Vec<f64>,
    u: Vec<f64>,
    m_u: Vec<f64>,
    norm_sq: f64,
}

fn full_solves(
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    mus: &[f64],
    opts: RhsOptions,
) -> Result<Vec<FullSolve>> {
    mus.par_iter()
        .map(|&mu| {
            let inst = instantiate(problem, affine, mu);
            let op = Arc::new(assemble_adjoint(&inst, grid, spaces, DataMode::Constant)?);
            let rhs = assemble_rhs(&inst, grid, spaces, opts)?;
            let sol = solve_full(op.clone(), &rhs)?;
            let u = sol.u_broken.expect("constant mode always reconstructs");
            let m_u = op.mass.mul_vec(&u);
            let norm_sq = dot(&u, &m_u).max(0.0);
            Ok(FullSolve { w: sol.w, u, m_u, norm_sq })
        })
        .collect()
}

/// Model error at one train parameter from cached cross terms:
/// e^2 = ||u_full||^2 - 2 sum_q theta_q g_q.w + w.f.
fn sweep_error(
    model: &ReducedModel,
    g: &[Vec<Vec<f64>>],
    full: &FullSolve,
    t: usize,
    mu: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Ok(full.norm_sq.sqrt());
    }
    let a = model.reduced_gram_truncated(mu, n);
    let f = model.reduced_rhs_truncated(mu, n);
    let chol = a.cholesky().ok_or(Error::SingularReducedSystem { n })?;
    let w = chol.solve(&nalgebra::DVector::from_column_slice(&f));
    let tb = model.theta_b_at(mu);
    let mut cross = 0.0;
    for (q, tq) in tb.iter().enumerate() {
        for i in 0..n {
            cross += tq * g[q][i][t] * w[i];
        }
    }
    let wf = f.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
    Ok((full.norm_sq - 2.0 * cross + wf).max(0.0).sqrt())
}

/// Equidistant parameter samples including both interval ends.
pub fn equidistant(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Seeded uniform parameter draws, reproducible across runs and platforms.
pub fn draw_params(lo: f64, hi: f64, count: usize, seed: u64) -> Vec<f64> {
    use rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| lo + (hi - lo) * crate::analysis::unit_f64(rng.next_u64()))
        .collect()
}

/// Algorithm: solve all train parameters full-order, then repeatedly add the
/// snapshot of the worst-approximated parameter until the tolerance holds.
pub fn strong_greedy(
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    train: &[f64],
    epsilon: f64,
    opts: RhsOptions,
) -> Result<(ReducedModel, GreedyTrace)> {
    if train.is_empty() {
        return Err(Error::BadInput("greedy requires a non-empty train set".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::BadInput("greedy tolerance must be positive".into()));
    }
    let parts: Vec<CsrMatrix> = affine
        .operator
        .iter()
        .map(|c| assemble_operator_part(c.part, grid, spaces))
        .collect::<Result<_>>()?;
    let rhs_vecs: Vec<Vec<f64>> = affine
        .rhs
        .iter()
        .map(|c| assemble_rhs_part(problem, grid, spaces, c.part, opts))
        .collect::<Result<_>>()?;
    let mass = assemble_mass(spaces);
    let fulls = full_solves(problem, affine, grid, spaces, train, opts)?;
    // Gram matrix at mu-bar for the basis-conditioning monitor.
    let y_bar = {
        let inst = instantiate(problem, affine, affine.mu_bar());
        assemble_adjoint(&inst, grid, spaces, DataMode::Constant)?.gram
    };

    let mut model = empty_model(problem, affine, grid, spaces)?;
    model.epsilon = epsilon;
    let qb = model.q_b();
    // g[q][i][t] = (b_{q,i}, u_full_t)_L2, extended with each new column.
    let mut g: Vec<Vec<Vec<f64>>> = vec![Vec::new(); qb];
    let mut gram_bar: Vec<Vec<f64>> = Vec::new();
    let mut yw_cols: Vec<Vec<f64>> = Vec::new();
    let mut steps = Vec::new();
    let status;

    loop {
        let n = model.n();
        let mut best_idx = 0usize;
        let mut best_err = f64::NEG_INFINITY;
        for (t, (mu, full)) in train.iter().zip(&fulls).enumerate() {
            let err = sweep_error(&model, &g, full, t, *mu, n)?;
            if err > best_err {
                best_err = err;
                best_idx = t;
            }
        }
        if best_err <= epsilon {
            steps.push(GreedyStep {
                n_basis: n,
                max_error: best_err,
                mu_star: None,
                mu_index: None,
            });
            status = GreedyStatus::Converged;
            break;
        }
        if model.selected_idx.contains(&best_idx) {
            steps.push(GreedyStep {
                n_basis: n,
                max_error: best_err,
                mu_star: None,
                mu_index: None,
            });
            status = GreedyStatus::Stalled;
            break;
        }
        steps.push(GreedyStep {
            n_basis: n,
            max_error: best_err,
            mu_star: Some(train[best_idx]),
            mu_index: Some(best_idx),
        });
        let w_star = fulls[best_idx].w.clone();
        extend_blocks(&mut model, &parts, &rhs_vecs, &mass, &w_star, train[best_idx], best_idx);
        for q in 0..qb {
            let col = model.b_cols[q].last().unwrap();
            g[q].push(fulls.iter().map(|f| dot(col, &f.m_u)).collect());
        }
        // Condition monitor of W^T Y_bar W.
        let w_new = model.w_cols.last().unwrap();
        let yw = y_bar.mul_vec(w_new);
        for (row, wc) in gram_bar.iter_mut().zip(&yw_cols) {
            row.push(dot(w_new, wc));
        }
        let mut new_row: Vec<f64> = model.w_cols[..model.n() - 1]
            .iter()
            .map(|wc| dot(wc, &yw))
            .collect();
        new_row.push(dot(w_new, &yw));
        gram_bar.push(new_row);
        yw_cols.push(yw);
        let nn = gram_bar.len();
        let gd = nalgebra::DMatrix::from_fn(nn, nn, |i, j| {
            if j < gram_bar[i].len() {
                gram_bar[i][j]
            } else {
                gram_bar[j][i]
            }
        });
        let eig = gd.symmetric_eigenvalues();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for e in eig.iter() {
            lo = lo.min(*e);
            hi = hi.max(*e);
        }
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if cond > BASIS_CONDITION_CAP {
            return Err(Error::BasisDegenerate { cond });
        }
        if model.n() == train.len() {
            status = GreedyStatus::TrainExhausted;
            break;
        }
    }
    Ok((model, GreedyTrace { steps, status }))
}

/// Max reduced-model error over a parameter set, for each basis size in
/// `n_values` (truncation sweep against cached full solves).
pub struct TestSweep {
    pub n_values: Vec<usize>,
    pub max_errors: Vec<f64>,
}

pub fn test_error_sweep(
    model: &ReducedModel,
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    mus: &[f64],
    n_values: &[usize],
    opts: RhsOptions,
) -> Result<TestSweep> {
    let fulls = full_solves(problem, affine, grid, spaces, mus, opts)?;
    let qb = model.q_b();
    let g: Vec<Vec<Vec<f64>>> = (0..qb)
        .map(|q| {
            model.b_cols[q]
                .iter()
                .map(|col| fulls.iter().map(|f| dot(col, &f.m_u)).collect())
                .collect()
        })
        .collect();
    let mut max_errors = Vec::with_capacity(n_values.len());
    for &n in n_values {
        if n > model.n() {
            return Err(Error::BadInput(format!(
                "basis size {n} exceeds the model's {}",
                model.n()
            )));
        }
        let mut worst = 0.0f64;
        for (t, (mu, full)) in mus.iter().zip(&fulls).enumerate() {
            worst = worst.max(sweep_error(model, &g, full, t, *mu, n)?);
        }
        max_errors.push(worst);
    }
    Ok(TestSweep { n_values: n_values.to_vec(), max_errors })
}

fn check_nested(coarse: &ReducedModel, fine: &ReducedModel) -> Result<()> {
    let meta_ok = coarse.problem == fine.problem
        && coarse.dim == fine.dim
        && coarse.n_h == fine.n_h
        && coarse.p == fine.p
        && coarse.theta_b == fine.theta_b
        && coarse.theta_f == fine.theta_f;
    if !meta_ok {
        return Err(Error::NotNested("models describe different problems".into()));
    }
    if coarse.n() > fine.n() {
        return Err(Error::NotNested("coarse model is larger than the fine model".into()));
    }
    if fine.selected.len() < coarse.selected.len()
        || coarse.selected[..] != fine.selected[..coarse.selected.len()]
    {
        return Err(Error::NotNested("selected parameters are not a prefix".into()));
    }
    for (a, b) in coarse.w_cols.iter().zip(&fine.w_cols) {
        if a != b {
            return Err(Error::NotNested("snapshot columns differ".into()));
        }
    }
    Ok(())
}

/// ||u^N - u^M||_L2 from the fine model's blocks: sqrt(d^T A^M_mu d) with
/// d the padded coefficient difference.
pub fn hierarchical_estimate(
    coarse: &ReducedModel,
    fine: &ReducedModel,
    mu: f64,
) -> Result<f64> {
    check_nested(coarse, fine)?;
    let n_m = fine.n();
    if n_m == 0 {
        return Ok(0.0);
    }
    let w_n = if coarse.n() == 0 {
        Vec::new()
    } else {
        online_solve(coarse, mu, false)?.w
    };
    let w_m = online_solve(fine, mu, false)?.w;
    let mut d = vec![0.0; n_m];
    for (i, slot) in d.iter_mut().enumerate() {
        *slot = w_n.get(i).copied().unwrap_or(0.0) - w_m[i];
    }
    let a = fine.reduced_gram(mu);
    let ad = &a * nalgebra::DVector::from_column_slice(&d);
    Ok(dot(&d, ad.as_slice()).max(0.0).sqrt())
}

/// Estimate vs true error of the coarse model at one parameter.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimatorAssessment {
    pub mu: f64,
    pub estimate: f64,
    pub true_error: f64,
}

/// Evaluates the hierarchical estimator against full-order errors.
pub fn assess_estimator(
    coarse: &ReducedModel,
    fine: &ReducedModel,
    problem: &TransportProblem,
    affine: &AffineDecomposition,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    mus: &[f64],
    opts: RhsOptions,
) -> Result<Vec<EstimatorAssessment>> {
    check_nested(coarse, fine)?;
    let fulls = full_solves(problem, affine, grid, spaces, mus, opts)?;
    let mass = assemble_mass(spaces);
    let mut out = Vec::with_capacity(mus.len());
    for (mu, full) in mus.iter().zip(&fulls) {
        let estimate = hierarchical_estimate(coarse, fine, *mu)?;
        let u_n = if coarse.n() == 0 {
            vec![0.0; coarse.n_broken]
        } else {
            online_solve(coarse, *mu, true)?.u_broken.unwrap()
        };
        let diff: Vec<f64> = u_n.iter().zip(&full.u).map(|(a, b)| a - b).collect();
        let md = mass.mul_vec(&diff);
        let true_error = dot(&diff, &md).max(0.0).sqrt();
        out.push(EstimatorAssessment { mu: *mu, estimate, true_error });
    }
    Ok(out)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelHeader {
    version: u32,
    problem: String,
    dim: usize,
    n_h: usize,
    p: usize,
    n_y: usize,
    n_broken: usize,
    n: usize,
    theta_b: Vec<String>,
    theta_b_scales: Vec<f64>,
    theta_f: Vec<String>,
    theta_f_scales: Vec<f64>,
    parameter_box: [f64; 2],
    epsilon: f64,
    mu_bar: f64,
    selected: Vec<f64>,
    selected_idx: Vec<usize>,
}

fn write_array(out: &mut Vec<u8>, name: &str, data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct ArrayReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ArrayReader<'a> {
    fn next(&mut self) -> Result<(String, Vec<f64>)> {
        let err = || Error::BadInput("truncated model file".into());
        let take = |pos: &mut usize, n: usize, buf: &'a [u8]| -> Result<&'a [u8]> {
            if *pos + n > buf.len() {
                return Err(err());
            }
            let s = &buf[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let name_len = u32::from_le_bytes(take(&mut self.pos, 4, self.buf)?.try_into().unwrap());
        let name = String::from_utf8(take(&mut self.pos, name_len as usize, self.buf)?.to_vec())
            .map_err(|_| err())?;
        let count = u64::from_le_bytes(take(&mut self.pos, 8, self.buf)?.try_into().unwrap());
        let bytes = take(&mut self.pos, count as usize * 8, self.buf)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, data))
    }
}

/// Writes the model container: magic, JSON header, named little-endian arrays.
pub fn save_model(model: &ReducedModel, path: &Path) -> Result<()> {
    let header = ModelHeader {
        version: 1,
        problem: model.problem.clone(),
        dim: model.dim,
        n_h: model.n_h,
        p: model.p,
        n_y: model.n_y,
        n_broken: model.n_broken,
        n: model.n(),
        theta_b: model.theta_b.iter().map(|(t, _)| t.id().to_string()).collect(),
        theta_b_scales: model.theta_b.iter().map(|(_, s)| *s).collect(),
        theta_f: model.theta_f.iter().map(|(t, _)| t.id().to_string()).collect(),
        theta_f_scales: model.theta_f.iter().map(|(_, s)| *s).collect(),
        parameter_box: [model.parameter_box.0, model.parameter_box.1],
        epsilon: model.epsilon,
        mu_bar: model.mu_bar,
        selected: model.selected.clone(),
        selected_idx: model.selected_idx.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    let n = model.n();
    let mut w_flat = Vec::with_capacity(n * model.n_y);
    for col in &model.w_cols {
        w_flat.extend_from_slice(col);
    }
    write_array(&mut out, "W", &w_flat);
    let qb = model.q_b();
    for q1 in 0..qb {
        for q2 in 0..qb {
            write_array(&mut out, &format!("A_{q1}_{q2}"), &model.a_blocks[q1 * qb + q2]);
        }
    }
    for (q, f) in model.f_blocks.iter().enumerate() {
        write_array(&mut out, &format!("f_{q}"), f);
    }
    for (q, cols) in model.b_cols.iter().enumerate() {
        let mut flat = Vec::with_capacity(n * model.n_broken);
        for col in cols {
            flat.extend_from_slice(col);
        }
        write_array(&mut out, &format!("b_{q}"), &flat);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a model container written by save_model.
pub fn load_model(path: &Path) -> Result<ReducedModel> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 || &buf[..8] != MODEL_MAGIC {
        return Err(Error::BadInput(format!(
            "{} is not a reduced-model file",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if 16 + header_len > buf.len() {
        return Err(Error::BadInput("truncated model file".into()));
    }
    let header: ModelHeader = serde_json::from_slice(&buf[16..16 + header_len])?;
    let mut reader = ArrayReader { buf: &buf, pos: 16 + header_len };
    let expect = |got: &str, want: &str| -> Result<()> {
        if got != want {
            return Err(Error::BadInput(format!(
                "model arrays out of order: found '{got}', expected '{want}'"
            )));
        }
        Ok(())
    };
    let (name, w_flat) = reader.next()?;
    expect(&name, "W")?;
    let n = header.n;
    if w_flat.len() != n * header.n_y {
        return Err(Error::BadInput("snapshot array has the wrong size".into()));
    }
    let w_cols: Vec<Vec<f64>> = w_flat.chunks(header.n_y).map(|c| c.to_vec()).collect();
    let qb = header.theta_b.len();
    let mut a_blocks = Vec::with_capacity(qb * qb);
    for q1 in 0..qb {
        for q2 in 0..qb {
            let (name, data) = reader.next()?;
            expect(&name, &format!("A_{q1}_{q2}"))?;
            if data.len() != n * n {
                return Err(Error::BadInput("gram block has the wrong size".into()));
            }
            a_blocks.push(data);
        }
    }
    let mut f_blocks = Vec::with_capacity(header.theta_f.len());
    for q in 0..header.theta_f.len() {
        let (name, data) = reader.next()?;
        expect(&name, &format!("f_{q}"))?;
        if data.len() != n {
            return Err(Error::BadInput("rhs block has the wrong size".into()));
        }
        f_blocks.push(data);
    }
    let mut b_cols = Vec::with_capacity(qb);
    for q in 0..qb {
        let (name, data) = reader.next()?;
        expect(&name, &format!("b_{q}"))?;
        if data.len() != n * header.n_broken {
            return Err(Error::BadInput("applied-basis block has the wrong size".into()));
        }
        b_cols.push(data.chunks(header.n_broken).map(|c| c.to_vec()).collect());
    }
    let theta_b = header
        .theta_b
        .iter()
        .zip(&header.theta_b_scales)
        .map(|(id, s)| Ok((ThetaForm::from_id(id)?, *s)))
        .collect::<Result<_>>()?;
    let theta_f = header
        .theta_f
        .iter()
        .zip(&header.theta_f_scales)
        .map(|(id, s)| Ok((ThetaForm::from_id(id)?, *s)))
        .collect::<Result<_>>()?;
    Ok(ReducedModel {
        problem: header.problem,
        dim: header.dim,
        n_h: header.n_h,
        p: header.p,
        n_y: header.n_y,
        n_broken: header.n_broken,
        theta_b,
        theta_f,
        parameter_box: (header.parameter_box[0], header.parameter_box[1]),
        epsilon: header.epsilon,
        mu_bar: header.mu_bar,
        selected: header.selected,
        selected_idx: header.selected_idx,
        w_cols,
        b_cols,
        a_blocks,
        f_blocks,
    })
}
