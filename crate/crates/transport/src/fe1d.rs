//! One-dimensional continuous FE spaces with one constrained endpoint, and
//! their embedding, differentiation, and mass matrices over the broken space.

use crate::assembly::CsrMatrix;
use crate::quad::gauss_legendre;
use crate::{Error, Result};

/// Which endpoint of the interval carries the essential zero constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstrainedEnd {
    Left,
    Right,
    None,
}

/// Continuous piecewise-polynomial space of order p on n_h equal cells of width h.
///
/// Nodes are equispaced (p per cell plus one shared); the constrained endpoint's
/// node is removed from the space. The domain is [0, n_h * h] in local coordinates.
#[derive(Debug, Clone)]
pub struct Fe1D {
    pub n_h: usize,
    pub p: usize,
    pub h: f64,
    pub constrained_end: ConstrainedEnd,
}

/// Embedding, differentiation, and broken mass matrices of a 1D space.
#[derive(Debug, Clone)]
pub struct OneDMatrices {
    /// Embedding of the continuous basis into the broken nodal basis, n_broken x n_test.
    pub embed: CsrMatrix,
    /// Broken-basis coefficients of the basis derivatives, n_broken x n_test.
    pub grad: CsrMatrix,
    /// Block-diagonal broken mass matrix, n_broken x n_broken.
    pub mass: CsrMatrix,
}

/// Values of the p+1 equispaced Lagrange basis polynomials on [0, 1] at t.
pub fn lagrange_values(p: usize, t: f64) -> Vec<f64> {
    let nodes: Vec<f64> = (0..=p).map(|m| m as f64 / p.max(1) as f64).collect();
    (0..=p)
        .map(|m| {
            let mut v = 1.0;
            for j in 0..=p {
                if j != m {
                    v *= (t - nodes[j]) / (nodes[m] - nodes[j]);
                }
            }
            v
        })
        .collect()
}

/// Derivatives of the p+1 equispaced Lagrange basis polynomials on [0, 1] at t.
pub fn lagrange_derivs(p: usize, t: f64) -> Vec<f64> {
    if p == 0 {
        return vec![0.0];
    }
    let nodes: Vec<f64> = (0..=p).map(|m| m as f64 / p as f64).collect();
    (0..=p)
        .map(|m| {
            let mut d = 0.0;
            for i in 0..=p {
                if i == m {
                    continue;
                }
                let mut prod = 1.0 / (nodes[m] - nodes[i]);
                for j in 0..=p {
                    if j != m && j != i {
                        prod *= (t - nodes[j]) / (nodes[m] - nodes[j]);
                    }
                }
                d += prod;
            }
            d
        })
        .collect()
}

impl Fe1D {
    pub fn new(n_h: usize, p: usize, h: f64, constrained_end: ConstrainedEnd) -> Self {
        assert!(n_h >= 1 && p >= 1 && h > 0.0);
        Fe1D { n_h, p, h, constrained_end }
    }

    /// Dimension of the (constrained) continuous space.
    pub fn n_test(&self) -> usize {
        match self.constrained_end {
            ConstrainedEnd::None => self.p * self.n_h + 1,
            _ => self.p * self.n_h,
        }
    }

    /// Dimension of the broken space, (p+1) per cell.
    pub fn n_broken(&self) -> usize {
        (self.p + 1) * self.n_h
    }

    /// Interval length n_h * h.
    pub fn len(&self) -> f64 {
        self.n_h as f64 * self.h
    }

    /// Test index of a global node, or None if that node is constrained.
    pub fn test_index(&self, node: usize) -> Option<usize> {
        let last = self.p * self.n_h;
        match self.constrained_end {
            ConstrainedEnd::None => Some(node),
            ConstrainedEnd::Left => {
                if node == 0 {
                    None
                } else {
                    Some(node - 1)
                }
            }
            ConstrainedEnd::Right => {
                if node == last {
                    None
                } else {
                    Some(node)
                }
            }
        }
    }

    /// Cell containing x under the left-closed convention, with the right
    /// boundary attached to the last cell; None outside [0, len].
    fn cell_of(&self, x: f64) -> Option<usize> {
        let tol = 1e-12 * self.len().max(1.0);
        if x < -tol || x > self.len() + tol {
            return None;
        }
        let k = (x / self.h).floor();
        Some((k.max(0.0) as usize).min(self.n_h - 1))
    }

    /// Builds the embedding, differentiation, and mass matrices.
    pub fn build_1d_matrices(&self) -> OneDMatrices {
        let (n_h, p, h) = (self.n_h, self.p, self.h);
        let n_broken = self.n_broken();
        let n_test = self.n_test();

        let mut embed_t = Vec::new();
        let mut grad_t = Vec::new();
        for k in 0..n_h {
            for l in 0..=p {
                let row = k * (p + 1) + l;
                let t_l = l as f64 / p as f64;
                let dref = lagrange_derivs(p, t_l);
                for m in 0..=p {
                    if let Some(col) = self.test_index(k * p + m) {
                        if l == m {
                            embed_t.push((row, col, 1.0));
                        }
                        if dref[m] != 0.0 {
                            grad_t.push((row, col, dref[m] / h));
                        }
                    }
                }
            }
        }

        // Local mass on [0, 1] by Gauss quadrature exact for degree 2p.
        let (qx, qw) = gauss_legendre(p + 1);
        let mut local = vec![0.0; (p + 1) * (p + 1)];
        for (ti, wi) in qx.iter().zip(&qw) {
            let t = 0.5 * (ti + 1.0);
            let vals = lagrange_values(p, t);
            for a in 0..=p {
                for b in 0..=p {
                    local[a * (p + 1) + b] += 0.5 * wi * vals[a] * vals[b];
                }
            }
        }
        let mut mass_t = Vec::new();
        for k in 0..n_h {
            for a in 0..=p {
                for b in 0..=p {
                    mass_t.push((k * (p + 1) + a, k * (p + 1) + b, h * local[a * (p + 1) + b]));
                }
            }
        }

        OneDMatrices {
            embed: CsrMatrix::from_triplets(n_broken, n_test, &embed_t),
            grad: CsrMatrix::from_triplets(n_broken, n_test, &grad_t),
            mass: CsrMatrix::from_triplets(n_broken, n_broken, &mass_t),
        }
    }

    /// Evaluates a continuous-space coefficient vector at the given points.
    pub fn eval_conforming(&self, coeffs: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(coeffs.len(), self.n_test());
        points
            .iter()
            .map(|&x| {
                let k = self.cell_of(x).ok_or(Error::PointOutOfDomain { point: vec![x] })?;
                let t = ((x - k as f64 * self.h) / self.h).clamp(0.0, 1.0);
                let vals = lagrange_values(self.p, t);
                let mut s = 0.0;
                for m in 0..=self.p {
                    if let Some(idx) = self.test_index(k * self.p + m) {
                        s += coeffs[idx] * vals[m];
                    }
                }
                Ok(s)
            })
            .collect()
    }

    /// Evaluates a broken-space coefficient vector at the given points (left-closed cells).
    pub fn eval_broken(&self, coeffs: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(coeffs.len(), self.n_broken());
        points
            .iter()
            .map(|&x| {
                let k = self.cell_of(x).ok_or(Error::PointOutOfDomain { point: vec![x] })?;
                let t = ((x - k as f64 * self.h) / self.h).clamp(0.0, 1.0);
                let vals = lagrange_values(self.p, t);
                let mut s = 0.0;
                for l in 0..=self.p {
                    s += coeffs[k * (self.p + 1) + l] * vals[l];
                }
                Ok(s)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre_on;
    use proptest::prelude::*;

    #[test]
    fn dimensions() {
        let s = Fe1D::new(4, 1, 0.25, ConstrainedEnd::Right);
        assert_eq!(s.n_test(), 4);
        assert_eq!(s.n_broken(), 8);
        let s = Fe1D::new(4, 2, 0.25, ConstrainedEnd::None);
        assert_eq!(s.n_test(), 9);
        assert_eq!(s.n_broken(), 12);
    }

    #[test]
    fn linear_embedding_matrix_right_constrained() {
        // Duplicated interior rows, zero last row: the right-end node is constrained.
        let s = Fe1D::new(3, 1, 1.0 / 3.0, ConstrainedEnd::Right);
        let m = s.build_1d_matrices();
        let expect = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0],
        ];
        let d = m.embed.to_dense();
        for i in 0..6 {
            for j in 0..3 {
                assert_eq!(d[i * 3 + j], expect[i][j], "I[{i}][{j}]");
            }
        }
    }

    #[test]
    fn linear_differentiation_matrix_right_constrained() {
        let s = Fe1D::new(3, 1, 1.0 / 3.0, ConstrainedEnd::Right);
        let m = s.build_1d_matrices();
        let expect = [
            [-1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.0],
            [0.0, -1.0, 1.0],
            [0.0, -1.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0],
        ];
        let d = m.grad.to_dense();
        for i in 0..6 {
            for j in 0..3 {
                assert!(
                    (d[i * 3 + j] - 3.0 * expect[i][j]).abs() < 1e-13,
                    "A[{i}][{j}] = {}",
                    d[i * 3 + j]
                );
            }
        }
    }

    #[test]
    fn linear_mass_matrix_blocks() {
        let h = 0.25;
        let s = Fe1D::new(4, 1, h, ConstrainedEnd::Right);
        let m = s.build_1d_matrices().mass;
        for k in 0..4 {
            let b = 2 * k;
            assert!((m.get(b, b) - h / 3.0).abs() < 1e-15);
            assert!((m.get(b, b + 1) - h / 6.0).abs() < 1e-15);
            assert!((m.get(b + 1, b) - h / 6.0).abs() < 1e-15);
            assert!((m.get(b + 1, b + 1) - h / 3.0).abs() < 1e-15);
        }
        assert_eq!(m.nnz(), 16);
    }

    #[test]
    fn quadratic_local_mass_is_classical() {
        let s = Fe1D::new(1, 2, 1.0, ConstrainedEnd::None);
        let m = s.build_1d_matrices().mass.to_dense();
        let expect = [
            [4.0, 2.0, -1.0],
            [2.0, 16.0, 2.0],
            [-1.0, 2.0, 4.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i * 3 + j] - expect[i][j] / 30.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embedding_of_constant_is_constant_when_unconstrained() {
        let s = Fe1D::new(3, 2, 1.0 / 3.0, ConstrainedEnd::None);
        let m = s.build_1d_matrices();
        let ones = vec![1.0; s.n_test()];
        for v in m.embed.mul_vec(&ones) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn differentiation_is_exact_on_representable_polynomials() {
        // Interpolate x^2 on a quadratic space; A must reproduce its derivative 2x.
        let s = Fe1D::new(2, 2, 0.5, ConstrainedEnd::None);
        let coeffs: Vec<f64> = (0..s.n_test()).map(|j| (j as f64 * 0.25).powi(2)).collect();
        let m = s.build_1d_matrices();
        let dcoeffs = m.grad.mul_vec(&coeffs);
        let pts = [0.1, 0.3, 0.49, 0.5, 0.77, 0.999];
        let vals = s.eval_broken(&dcoeffs, &pts).unwrap();
        for (x, v) in pts.iter().zip(vals) {
            assert!((v - 2.0 * x).abs() < 1e-13, "at {x}: {v}");
        }
    }

    #[test]
    fn mass_integrates_squares_exactly() {
        for p in 1..=3 {
            let s = Fe1D::new(3, p, 1.0 / 3.0, ConstrainedEnd::Left);
            let m = s.build_1d_matrices();
            let coeffs: Vec<f64> = (0..s.n_test()).map(|j| (j as f64 * 0.37).sin()).collect();
            let broken = m.embed.mul_vec(&coeffs);
            let quad_form: f64 = broken
                .iter()
                .zip(m.mass.mul_vec(&broken))
                .map(|(a, b)| a * b)
                .sum();
            // High-order quadrature oracle on each cell.
            let mut integral = 0.0;
            for k in 0..3 {
                let (qx, qw) = gauss_legendre_on(p + 3, k as f64 / 3.0, (k + 1) as f64 / 3.0);
                let vals = s.eval_conforming(&coeffs, &qx).unwrap();
                integral += qx
                    .iter()
                    .zip(&qw)
                    .zip(&vals)
                    .map(|((_, w), v)| w * v * v)
                    .sum::<f64>();
            }
            assert!(
                (quad_form - integral).abs() <= 1e-12 * integral.abs().max(1.0),
                "p={p}: {quad_form} vs {integral}"
            );
        }
    }

    #[test]
    fn eval_is_left_closed_and_checks_domain() {
        let s = Fe1D::new(2, 1, 0.5, ConstrainedEnd::None);
        // Coefficients forming a jumpless hat; broken vector with a jump at 0.5.
        let broken = vec![0.0, 1.0, 2.0, 3.0];
        let at_break = s.eval_broken(&broken, &[0.5]).unwrap();
        assert_eq!(at_break[0], 2.0);
        let at_end = s.eval_broken(&broken, &[1.0]).unwrap();
        assert_eq!(at_end[0], 3.0);
        assert!(matches!(
            s.eval_broken(&broken, &[1.1]),
            Err(crate::Error::PointOutOfDomain { .. })
        ));
    }

    proptest! {
        #[test]
        fn lagrange_partition_of_unity(p in 1usize..5, t in 0.0f64..1.0) {
            let v: f64 = lagrange_values(p, t).iter().sum();
            let d: f64 = lagrange_derivs(p, t).iter().sum();
            prop_assert!((v - 1.0).abs() < 1e-12);
            prop_assert!(d.abs() < 1e-10);
        }

        #[test]
        fn lagrange_nodal_property(p in 1usize..5) {
            for l in 0..=p {
                let vals = lagrange_values(p, l as f64 / p as f64);
                for m in 0..=p {
                    let expect = if m == l { 1.0 } else { 0.0 };
                    prop_assert!((vals[m] - expect).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn conforming_eval_agrees_with_embedding(
            p in 1usize..4,
            coeffs_seed in proptest::collection::vec(-2.0f64..2.0, 13),
            pts in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            let s = Fe1D::new(3, p, 1.0 / 3.0, ConstrainedEnd::Right);
            let coeffs: Vec<f64> = coeffs_seed.into_iter().take(s.n_test()).collect();
            prop_assume!(coeffs.len() == s.n_test());
            let m = s.build_1d_matrices();
            let broken = m.embed.mul_vec(&coeffs);
            let direct = s.eval_conforming(&coeffs, &pts).unwrap();
            let via_embed = s.eval_broken(&broken, &pts).unwrap();
            for (a, b) in direct.iter().zip(via_embed) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
