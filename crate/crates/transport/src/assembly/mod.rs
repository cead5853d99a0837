//! Assembly of the discrete adjoint operator B*, broken mass M, Gram matrix
//! Y = (B*)^T M B*, and right-hand-side functionals, via Kronecker products
//! (constant / piecewise-constant data) or cell quadrature (general data).

mod csr;
pub use csr::CsrMatrix;

use std::sync::Arc;

use crate::fe1d::{lagrange_derivs, lagrange_values, ConstrainedEnd, Fe1D};
use crate::grid::{FaceLabel, Side, TensorGrid};
use crate::problem::{OperatorPart, RhsPart, TransportProblem};
use crate::quad::gauss_legendre;
use crate::{Error, Result};

/// How coefficient data enters the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Globally constant b and c; scalar Kronecker combination.
    Constant,
    /// Cell-midpoint values of b and c; diagonal-weighted Kronecker combination.
    PiecewiseConstant,
    /// Arbitrary data; Gram matrix assembled by quadrature.
    General,
}

impl std::str::FromStr for DataMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(DataMode::Constant),
            "pwconstant" => Ok(DataMode::PiecewiseConstant),
            "general" => Ok(DataMode::General),
            other => Err(Error::BadInput(format!(
                "unknown mode '{other}' (expected constant|pwconstant|general)"
            ))),
        }
    }
}

/// Number of samples per tangential dimension when classifying faces internally.
const CLASSIFY_SAMPLES: usize = 17;

/// The assembled discrete operator on a tensor grid of 1D test spaces.
pub struct DiscreteOperator {
    pub grid: TensorGrid,
    pub spaces: Vec<Fe1D>,
    pub mode: DataMode,
    /// B* mapping test coefficients to broken trial coefficients; None in general mode.
    pub bstar: Option<CsrMatrix>,
    /// Broken tensor mass matrix.
    pub mass: CsrMatrix,
    /// Gram matrix Y = (B*)^T M B* (normal-equation matrix).
    pub gram: CsrMatrix,
    /// Embedding of the conforming test space into the broken space.
    pub embed: CsrMatrix,
    /// Per-dimension broken derivative maps.
    pub deriv: Vec<CsrMatrix>,
    pub problem: Arc<TransportProblem>,
}

impl DiscreteOperator {
    /// Dimension of the test space (and of the Gram system).
    pub fn n_test(&self) -> usize {
        self.spaces.iter().map(|s| s.n_test()).product()
    }

    /// Dimension of the broken trial space.
    pub fn n_broken(&self) -> usize {
        self.spaces.iter().map(|s| s.n_broken()).product()
    }
}

/// Test spaces matching the grid, constrained on each outflow face.
pub fn test_spaces(problem: &TransportProblem, grid: &TensorGrid, p: usize) -> Result<Vec<Fe1D>> {
    let faces = problem.classify(grid, CLASSIFY_SAMPLES)?;
    let mut spaces = Vec::with_capacity(grid.dim);
    for d in 0..grid.dim {
        let left = faces.label(d, Side::Left);
        let right = faces.label(d, Side::Right);
        let end = match (left, right) {
            (FaceLabel::Outflow, FaceLabel::Outflow) => {
                return Err(Error::InconsistentSpaces(format!(
                    "both faces of dimension {d} are outflow"
                )))
            }
            (FaceLabel::Outflow, _) => ConstrainedEnd::Left,
            (_, FaceLabel::Outflow) => ConstrainedEnd::Right,
            _ => ConstrainedEnd::None,
        };
        spaces.push(Fe1D::new(grid.n_h[d], p, grid.h(d), end));
    }
    Ok(spaces)
}

/// Checks that the spaces form a consistent tensor pair for the grid.
fn check_spaces(problem: &TransportProblem, grid: &TensorGrid, spaces: &[Fe1D]) -> Result<()> {
    if spaces.len() != grid.dim {
        return Err(Error::InconsistentSpaces(format!(
            "{} spaces for a {}-dimensional grid",
            spaces.len(),
            grid.dim
        )));
    }
    let p = spaces[0].p;
    for (d, s) in spaces.iter().enumerate() {
        if s.p != p {
            return Err(Error::InconsistentSpaces(
                "mixed polynomial orders across dimensions".into(),
            ));
        }
        if s.n_h != grid.n_h[d] || (s.h - grid.h(d)).abs() > 1e-12 * grid.h(d) {
            return Err(Error::InconsistentSpaces(format!(
                "space {d} does not match the grid cells"
            )));
        }
    }
    let expected = test_spaces(problem, grid, p)?;
    for (d, (s, e)) in spaces.iter().zip(&expected).enumerate() {
        if s.constrained_end != e.constrained_end {
            return Err(Error::InconsistentSpaces(format!(
                "dimension {d} must be constrained at the outflow face"
            )));
        }
    }
    Ok(())
}

fn kron_all(mats: &[CsrMatrix]) -> CsrMatrix {
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc = acc.kron(m);
    }
    acc
}

/// Structural matrices shared by all modes: embedding, derivatives, mass.
fn structure(spaces: &[Fe1D]) -> (CsrMatrix, Vec<CsrMatrix>, CsrMatrix) {
    let built: Vec<_> = spaces.iter().map(|s| s.build_1d_matrices()).collect();
    let embeds: Vec<_> = built.iter().map(|m| m.embed.clone()).collect();
    let embed = kron_all(&embeds);
    let mut deriv = Vec::with_capacity(spaces.len());
    for d in 0..spaces.len() {
        let factors: Vec<_> = built
            .iter()
            .enumerate()
            .map(|(e, m)| if e == d { m.grad.clone() } else { m.embed.clone() })
            .collect();
        deriv.push(kron_all(&factors));
    }
    let masses: Vec<_> = built.iter().map(|m| m.mass.clone()).collect();
    (embed, deriv, kron_all(&masses))
}

/// Broken tensor mass matrix alone, for norms without a full operator.
pub fn assemble_mass(spaces: &[Fe1D]) -> CsrMatrix {
    structure(spaces).2
}

/// Values of a coefficient at the cell midpoint of every broken DOF.
pub(crate) fn broken_midpoint_values(
    grid: &TensorGrid,
    spaces: &[Fe1D],
    f: impl Fn(&[f64]) -> f64,
) -> Vec<f64> {
    let dim = grid.dim;
    let radix: Vec<usize> = spaces.iter().map(|s| s.n_broken()).collect();
    let total: usize = radix.iter().product();
    let mut vals = vec![0.0; total];
    let mut cell = vec![0usize; dim];
    for flat in 0..total {
        let mut rest = flat;
        for d in (0..dim).rev() {
            let r = rest % radix[d];
            rest /= radix[d];
            cell[d] = r / (spaces[d].p + 1);
        }
        vals[flat] = f(&grid.cell_midpoint(&cell));
    }
    vals
}

/// Assembles the discrete operator in constant or piecewise-constant mode
/// (general mode delegates to quadrature assembly with the default order p+2).
pub fn assemble_adjoint(
    problem: &TransportProblem,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    mode: DataMode,
) -> Result<DiscreteOperator> {
    check_spaces(problem, grid, spaces)?;
    if mode == DataMode::General {
        return assemble_adjoint_general(problem, grid, spaces, spaces[0].p + 2);
    }
    let (embed, deriv, mass) = structure(spaces);

    let bstar = match mode {
        DataMode::Constant => {
            let b = match &problem.advection {
                crate::problem::Advection::Constant(b) => b.clone(),
                _ => {
                    return Err(Error::BadInput(
                        "constant mode requires a constant advection field".into(),
                    ))
                }
            };
            let c = problem.reaction.as_constant().ok_or_else(|| {
                Error::BadInput("constant mode requires a constant reaction coefficient".into())
            })?;
            let mut terms: Vec<(f64, &CsrMatrix)> =
                b.iter().zip(&deriv).map(|(&bd, a)| (-bd, a)).collect();
            terms.push((c, &embed));
            CsrMatrix::linear_combination(&terms)
        }
        DataMode::PiecewiseConstant => {
            let adv = &problem.advection;
            let scaled: Vec<CsrMatrix> = (0..grid.dim)
                .map(|d| {
                    let bd = broken_midpoint_values(grid, spaces, |x| adv.eval(x)[d]);
                    deriv[d].scale_rows(&bd)
                })
                .collect();
            let cvals = broken_midpoint_values(grid, spaces, |x| problem.reaction.eval(x));
            let ce = embed.scale_rows(&cvals);
            let mut terms: Vec<(f64, &CsrMatrix)> = scaled.iter().map(|m| (-1.0, m)).collect();
            terms.push((1.0, &ce));
            CsrMatrix::linear_combination(&terms)
        }
        DataMode::General => unreachable!(),
    };

    let gram = bstar.transpose().matmul(&mass.matmul(&bstar));
    Ok(DiscreteOperator {
        grid: grid.clone(),
        spaces: spaces.to_vec(),
        mode,
        bstar: Some(bstar),
        mass,
        gram,
        embed,
        deriv,
        problem: Arc::new(problem.clone()),
    })
}

/// Assembles the Gram matrix by tensor Gauss quadrature for general data.
pub fn assemble_adjoint_general(
    problem: &TransportProblem,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    q: usize,
) -> Result<DiscreteOperator> {
    check_spaces(problem, grid, spaces)?;
    let p = spaces[0].p;
    if q < p + 1 {
        return Err(Error::QuadratureOrderTooLow { q, need: p + 1 });
    }
    let (embed, deriv, mass) = structure(spaces);
    let dim = grid.dim;
    let (qx, qw) = gauss_legendre(q);
    // Reference basis values and derivatives at the quadrature points.
    let tref: Vec<f64> = qx.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let vals: Vec<Vec<f64>> = tref.iter().map(|&t| lagrange_values(p, t)).collect();
    let ders: Vec<Vec<f64>> = tref.iter().map(|&t| lagrange_derivs(p, t)).collect();

    let n_local = (p + 1).pow(dim as u32);
    let n_qp = q.pow(dim as u32);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut local_idx = vec![0usize; dim];
    let mut qp_idx = vec![0usize; dim];
    let mut bphi = vec![0.0; n_local];
    let mut dof = vec![0usize; n_local];

    for flat in 0..grid.n_cells() {
        let cell = grid.cell_multi(flat);
        let origin = grid.cell_origin(&cell);
        // Global test DOF per local node; usize::MAX marks a constrained node.
        for lm in 0..n_local {
            let mut rest = lm;
            let mut global = 0usize;
            let mut ok = true;
            for d in (0..dim).rev() {
                local_idx[d] = rest % (p + 1);
                rest /= p + 1;
            }
            for d in 0..dim {
                match spaces[d].test_index(cell[d] * p + local_idx[d]) {
                    Some(j) => global = global * spaces[d].n_test() + j,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            dof[lm] = if ok { global } else { usize::MAX };
        }
        let mut local = vec![0.0; n_local * n_local];
        for kp in 0..n_qp {
            let mut rest = kp;
            for d in (0..dim).rev() {
                qp_idx[d] = rest % q;
                rest /= q;
            }
            let mut x = vec![0.0; dim];
            let mut w = 1.0;
            for d in 0..dim {
                x[d] = origin[d] + grid.h(d) * tref[qp_idx[d]];
                w *= 0.5 * grid.h(d) * qw[qp_idx[d]];
            }
            let b = problem.advection.eval(&x);
            let zeroth = problem.reaction.eval(&x) - problem.advection.divergence(&x);
            // B* phi = -b . grad(phi) + (c - div b) phi for every local basis function.
            for lm in 0..n_local {
                let mut rest = lm;
                for d in (0..dim).rev() {
                    local_idx[d] = rest % (p + 1);
                    rest /= p + 1;
                }
                let mut val = 1.0;
                let mut grad = vec![1.0; dim];
                for d in 0..dim {
                    let v = vals[qp_idx[d]][local_idx[d]];
                    let dv = ders[qp_idx[d]][local_idx[d]] / grid.h(d);
                    for (e, g) in grad.iter_mut().enumerate() {
                        *g *= if e == d { dv } else { v };
                    }
                    val *= v;
                }
                let mut s = zeroth * val;
                for d in 0..dim {
                    s -= b[d] * grad[d];
                }
                bphi[lm] = s;
            }
            // Mirrored entries get the identical product, keeping exact symmetry.
            for a in 0..n_local {
                let wa = w * bphi[a];
                local[a * n_local + a] += wa * bphi[a];
                for bidx in (a + 1)..n_local {
                    let v = wa * bphi[bidx];
                    local[a * n_local + bidx] += v;
                    local[bidx * n_local + a] += v;
                }
            }
        }
        for a in 0..n_local {
            if dof[a] == usize::MAX {
                continue;
            }
            for bidx in 0..n_local {
                if dof[bidx] != usize::MAX {
                    triplets.push((dof[a], dof[bidx], local[a * n_local + bidx]));
                }
            }
        }
    }
    let n_y: usize = spaces.iter().map(|s| s.n_test()).product();
    let gram = CsrMatrix::from_triplets(n_y, n_y, &triplets);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        spaces: spaces.to_vec(),
        mode: DataMode::General,
        bstar: None,
        mass,
        gram,
        embed,
        deriv,
        problem: Arc::new(problem.clone()),
    })
}

/// One parameter-independent operator component for affine problems.
pub fn assemble_operator_part(
    part: OperatorPart,
    grid: &TensorGrid,
    spaces: &[Fe1D],
) -> Result<CsrMatrix> {
    for (d, s) in spaces.iter().enumerate() {
        if s.n_h != grid.n_h[d] {
            return Err(Error::InconsistentSpaces(format!(
                "space {d} does not match the grid cells"
            )));
        }
    }
    let (embed, deriv, _) = structure(spaces);
    Ok(match part {
        OperatorPart::AdvectionDir(d) => CsrMatrix::linear_combination(&[(-1.0, &deriv[d])]),
        OperatorPart::Reaction => embed,
    })
}

/// Quadrature options for right-hand-side and error integrals.
#[derive(Debug, Clone, Copy)]
pub struct RhsOptions {
    /// Gauss points per direction and quadrature piece.
    pub q: usize,
    /// Uniform subdivisions of each cell (per direction) on top of jump splits.
    pub subdiv: usize,
}

impl RhsOptions {
    pub fn for_order(p: usize) -> Self {
        RhsOptions { q: p + 2, subdiv: 1 }
    }
}

/// Per-cell quadrature in one dimension, cells split at the given jump
/// positions and refined `subdiv`-fold.
fn dim_rule(
    grid: &TensorGrid,
    d: usize,
    jumps: &[f64],
    opts: RhsOptions,
) -> Vec<Vec<(f64, f64)>> {
    let (h, a) = (grid.h(d), grid.a[d]);
    let (qx, qw) = gauss_legendre(opts.q);
    let mut out = Vec::with_capacity(grid.n_h[d]);
    for k in 0..grid.n_h[d] {
        let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let mut cuts = vec![x0];
        for &j in jumps {
            if j > x0 + 1e-14 * h && j < x1 - 1e-14 * h {
                cuts.push(j);
            }
        }
        cuts.push(x1);
        cuts.sort_by(|u, v| u.partial_cmp(v).unwrap());
        let mut pts = Vec::new();
        for win in cuts.windows(2) {
            for s in 0..opts.subdiv {
                let lo = win[0] + (win[1] - win[0]) * s as f64 / opts.subdiv as f64;
                let hi = win[0] + (win[1] - win[0]) * (s + 1) as f64 / opts.subdiv as f64;
                for (t, wt) in qx.iter().zip(&qw) {
                    pts.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * t, 0.5 * (hi - lo) * wt));
                }
            }
        }
        out.push(pts);
    }
    out
}

/// Adds w * prod(vals) to every unconstrained test DOF of the given cell.
fn scatter_cell(
    spaces: &[Fe1D],
    cell: &[usize],
    vals: &[Vec<f64>],
    w: f64,
    out: &mut [f64],
) {
    let dim = spaces.len();
    let p = spaces[0].p;
    let n_local = (p + 1).pow(dim as u32);
    let mut m = vec![0usize; dim];
    for lm in 0..n_local {
        let mut rest = lm;
        for d in (0..dim).rev() {
            m[d] = rest % (p + 1);
            rest /= p + 1;
        }
        let mut flat = 0usize;
        let mut v = w;
        let mut ok = true;
        for d in 0..dim {
            match spaces[d].test_index(cell[d] * p + m[d]) {
                Some(j) => {
                    flat = flat * spaces[d].n_test() + j;
                    v *= vals[d][m[d]];
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && v != 0.0 {
            out[flat] += v;
        }
    }
}

/// Volume contribution of a source field to the rhs vector.
fn volume_rhs(
    source: &dyn Fn(&[f64]) -> f64,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    opts: RhsOptions,
    out: &mut [f64],
) {
    let dim = grid.dim;
    let rules: Vec<_> = (0..dim).map(|d| dim_rule(grid, d, &[], opts)).collect();
    let p = spaces[0].p;
    let mut idx = vec![0usize; dim];
    for flat in 0..grid.n_cells() {
        let cell = grid.cell_multi(flat);
        let counts: Vec<usize> = (0..dim).map(|d| rules[d][cell[d]].len()).collect();
        let total: usize = counts.iter().product();
        for kp in 0..total {
            let mut rest = kp;
            for d in (0..dim).rev() {
                idx[d] = rest % counts[d];
                rest /= counts[d];
            }
            let mut x = vec![0.0; dim];
            let mut w = 1.0;
            for d in 0..dim {
                let (xx, ww) = rules[d][cell[d]][idx[d]];
                x[d] = xx;
                w *= ww;
            }
            let f = source(&x);
            if f == 0.0 {
                continue;
            }
            let vals: Vec<Vec<f64>> = (0..dim)
                .map(|d| {
                    let t = ((x[d] - grid.a[d]) / grid.h(d) - cell[d] as f64).clamp(0.0, 1.0);
                    lagrange_values(p, t)
                })
                .collect();
            scatter_cell(spaces, &cell, &vals, w * f, out);
        }
    }
}

/// Face contribution on one side; the weight is |b*n| for the physical rhs and
/// 1 for affine components (the parameter carries the weight there).
fn face_rhs(
    problem: &TransportProblem,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    d: usize,
    side: Side,
    weighted: bool,
    opts: RhsOptions,
    out: &mut [f64],
) {
    let dim = grid.dim;
    let p = spaces[0].p;
    let node = match side {
        Side::Left => 0,
        Side::Right => p * grid.n_h[d],
    };
    if spaces[d].test_index(node).is_none() {
        return;
    }
    let coord = match side {
        Side::Left => grid.a[d],
        Side::Right => grid.b[d],
    };
    let others: Vec<usize> = (0..dim).filter(|&e| e != d).collect();
    let rules: Vec<_> = others
        .iter()
        .map(|&e| {
            let jumps = problem.g_jumps.get(e).map(|v| v.as_slice()).unwrap_or(&[]);
            dim_rule(grid, e, jumps, opts)
        })
        .collect();
    let sub_cells: usize = others.iter().map(|&e| grid.n_h[e]).product();
    let mut cell_idx = vec![0usize; others.len()];
    let mut pt_idx = vec![0usize; others.len()];
    for sc in 0..sub_cells {
        let mut rest = sc;
        for (i, &e) in others.iter().enumerate().rev() {
            cell_idx[i] = rest % grid.n_h[e];
            rest /= grid.n_h[e];
        }
        let counts: Vec<usize> = (0..others.len()).map(|i| rules[i][cell_idx[i]].len()).collect();
        let total: usize = counts.iter().product();
        for kp in 0..total {
            let mut rest = kp;
            for i in (0..others.len()).rev() {
                pt_idx[i] = rest % counts[i];
                rest /= counts[i];
            }
            let mut x = vec![0.0; dim];
            x[d] = coord;
            let mut w = 1.0;
            for (i, &e) in others.iter().enumerate() {
                let (xx, ww) = rules[i][cell_idx[i]][pt_idx[i]];
                x[e] = xx;
                w *= ww;
            }
            let g = (problem.inflow_data)(&x);
            if g == 0.0 {
                continue;
            }
            if weighted {
                w *= problem.advection.eval(&x)[d].abs();
            }
            // Scatter over the tangential local nodes; the normal direction
            // contributes the boundary node with trace value one.
            let mut full_cell = vec![0usize; dim];
            let mut vals: Vec<Vec<f64>> = vec![Vec::new(); dim];
            full_cell[d] = match side {
                Side::Left => 0,
                Side::Right => grid.n_h[d] - 1,
            };
            let mut fixed = vec![0.0; p + 1];
            let local_fixed = match side {
                Side::Left => 0,
                Side::Right => p,
            };
            fixed[local_fixed] = 1.0;
            vals[d] = fixed;
            for (i, &e) in others.iter().enumerate() {
                full_cell[e] = cell_idx[i];
                let t = ((x[e] - grid.a[e]) / grid.h(e) - cell_idx[i] as f64).clamp(0.0, 1.0);
                vals[e] = lagrange_values(p, t);
            }
            scatter_cell(spaces, &full_cell, &vals, w * g, out);
        }
    }
}

/// Assembles the full rhs functional: volume source plus |b*n|-weighted inflow data.
pub fn assemble_rhs(
    problem: &TransportProblem,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    opts: RhsOptions,
) -> Result<Vec<f64>> {
    check_spaces(problem, grid, spaces)?;
    let n_y: usize = spaces.iter().map(|s| s.n_test()).product();
    let mut out = vec![0.0; n_y];
    if !problem.source.is_zero() {
        let src = &problem.source;
        volume_rhs(&|x| src.eval(x), grid, spaces, opts, &mut out);
    }
    let faces = problem.classify(grid, CLASSIFY_SAMPLES)?;
    for d in 0..grid.dim {
        for side in [Side::Left, Side::Right] {
            if faces.label(d, side) == FaceLabel::Inflow {
                face_rhs(problem, grid, spaces, d, side, true, opts, &mut out);
            }
        }
    }
    Ok(out)
}

/// Assembles one parameter-independent rhs component for affine problems.
pub fn assemble_rhs_part(
    problem: &TransportProblem,
    grid: &TensorGrid,
    spaces: &[Fe1D],
    part: RhsPart,
    opts: RhsOptions,
) -> Result<Vec<f64>> {
    check_spaces(problem, grid, spaces)?;
    let n_y: usize = spaces.iter().map(|s| s.n_test()).product();
    let mut out = vec![0.0; n_y];
    match part {
        RhsPart::Volume => {
            let src = &problem.source;
            volume_rhs(&|x| src.eval(x), grid, spaces, opts, &mut out);
        }
        RhsPart::InflowSide { dim, side } => {
            face_rhs(problem, grid, spaces, dim, side, false, opts, &mut out);
        }
    }
    Ok(out)
}

/// Evaluates a broken tensor-polynomial coefficient vector at a point.
pub fn eval_broken(
    grid: &TensorGrid,
    spaces: &[Fe1D],
    coeffs: &[f64],
    x: &[f64],
) -> Result<f64> {
    let cell = grid
        .cell_of(x)
        .ok_or_else(|| Error::PointOutOfDomain { point: x.to_vec() })?;
    let dim = grid.dim;
    let p = spaces[0].p;
    let vals: Vec<Vec<f64>> = (0..dim)
        .map(|d| {
            let t = ((x[d] - grid.a[d]) / grid.h(d) - cell[d] as f64).clamp(0.0, 1.0);
            lagrange_values(p, t)
        })
        .collect();
    let radix: Vec<usize> = spaces.iter().map(|s| s.n_broken()).collect();
    let n_local = (p + 1).pow(dim as u32);
    let mut s = 0.0;
    let mut m = vec![0usize; dim];
    for lm in 0..n_local {
        let mut rest = lm;
        for d in (0..dim).rev() {
            m[d] = rest % (p + 1);
            rest /= p + 1;
        }
        let mut flat = 0usize;
        let mut v = 1.0;
        for d in 0..dim {
            flat = flat * radix[d] + cell[d] * (p + 1) + m[d];
            v *= vals[d][m[d]];
        }
        s += coeffs[flat] * v;
    }
    Ok(s)
}
