//! Tensor-product grids on axis-aligned boxes, face classification by
//! advection sign, and extension beyond the outflow boundary.

use crate::{Error, Result};

/// One of the two faces of a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Inflow/outflow/characteristic label of a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceLabel {
    Inflow,
    Outflow,
    Characteristic,
}

/// Per-face labels with the sampled range of b*n as diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FaceClassification {
    /// labels[d] = [left face, right face] of dimension d.
    pub labels: Vec<[FaceLabel; 2]>,
    /// Sampled (min, max) of b*n per face, same layout as `labels`.
    pub bn_range: Vec<[(f64, f64); 2]>,
}

impl FaceClassification {
    pub fn label(&self, dim: usize, side: Side) -> FaceLabel {
        self.labels[dim][side as usize]
    }
}

/// Equispaced tensor grid on a box, n_h[d] cells per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub dim: usize,
    pub n_h: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Cell layers added beyond the outflow boundary (0 = unextended).
    pub extension_layers: usize,
}

impl TensorGrid {
    /// Uniform grid with n cells per dimension on the unit box.
    pub fn unit(dim: usize, n: usize) -> Self {
        Self::new(vec![n; dim], vec![0.0; dim], vec![1.0; dim])
    }

    pub fn new(n_h: Vec<usize>, a: Vec<f64>, b: Vec<f64>) -> Self {
        let dim = n_h.len();
        assert!(dim >= 1 && a.len() == dim && b.len() == dim);
        for d in 0..dim {
            assert!(n_h[d] >= 1 && b[d] > a[d]);
        }
        TensorGrid { dim, n_h, a, b, extension_layers: 0 }
    }

    /// Mesh width in dimension d.
    pub fn h(&self, d: usize) -> f64 {
        (self.b[d] - self.a[d]) / self.n_h[d] as f64
    }

    /// Total number of cells.
    pub fn n_cells(&self) -> usize {
        self.n_h.iter().product()
    }

    /// Flat index of a cell multi-index, dimension-major (d = 0 slowest).
    pub fn cell_flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for d in 0..self.dim {
            debug_assert!(idx[d] < self.n_h[d]);
            f = f * self.n_h[d] + idx[d];
        }
        f
    }

    /// Cell multi-index from a flat index.
    pub fn cell_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            idx[d] = flat % self.n_h[d];
            flat /= self.n_h[d];
        }
        idx
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim).map(|d| self.a[d] + idx[d] as f64 * self.h(d)).collect()
    }

    /// Midpoint of a cell.
    pub fn cell_midpoint(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim)
            .map(|d| self.a[d] + (idx[d] as f64 + 0.5) * self.h(d))
            .collect()
    }

    /// Cell containing x (left-closed; right boundary joins the last cell), or None outside.
    pub fn cell_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx = vec![0; self.dim];
        for d in 0..self.dim {
            let tol = 1e-12 * (self.b[d] - self.a[d]).max(1.0);
            if x[d] < self.a[d] - tol || x[d] > self.b[d] + tol {
                return None;
            }
            let k = ((x[d] - self.a[d]) / self.h(d)).floor().max(0.0) as usize;
            idx[d] = k.min(self.n_h[d] - 1);
        }
        Some(idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.cell_of(x).is_some()
    }
}

/// Classifies each boundary face by the sign of b*n on a sampled lattice.
///
/// Samples an equispaced lattice (endpoints included) with n_samples points per
/// tangential dimension; the characteristic tolerance is 1e-12 times the
/// largest sampled |b| component.
pub fn classify_faces<F>(grid: &TensorGrid, advection: F, n_samples: usize) -> Result<FaceClassification>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n_samples = n_samples.max(2);
    // First pass: collect b*n samples per face and the global advection scale.
    let mut samples: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; grid.dim];
    let mut scale: f64 = 0.0;
    for d in 0..grid.dim {
        for (s, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let coord = if side == Side::Left { grid.a[d] } else { grid.b[d] };
            let normal = if side == Side::Left { -1.0 } else { 1.0 };
            let tangential: Vec<usize> = (0..grid.dim).filter(|&e| e != d).collect();
            let count = n_samples.pow(tangential.len() as u32);
            for k in 0..count {
                let mut x = vec![0.0; grid.dim];
                x[d] = coord;
                let mut rest = k;
                for &e in tangential.iter().rev() {
                    let i = rest % n_samples;
                    rest /= n_samples;
                    x[e] = grid.a[e] + (grid.b[e] - grid.a[e]) * i as f64 / (n_samples - 1) as f64;
                }
                let b = advection(&x);
                for &bi in &b {
                    scale = scale.max(bi.abs());
                }
                samples[d][s].push(normal * b[d]);
            }
        }
    }
    let tol = 1e-12 * scale.max(1e-300);

    let mut labels = Vec::with_capacity(grid.dim);
    let mut bn_range = Vec::with_capacity(grid.dim);
    for d in 0..grid.dim {
        let mut dim_labels = [FaceLabel::Characteristic; 2];
        let mut dim_range = [(0.0, 0.0); 2];
        for (s, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let bn = &samples[d][s];
            let min = bn.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = bn.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            dim_range[s] = (min, max);
            dim_labels[s] = if max.abs() <= tol && min.abs() <= tol {
                FaceLabel::Characteristic
            } else if max <= tol {
                FaceLabel::Inflow
            } else if min >= -tol {
                FaceLabel::Outflow
            } else {
                return Err(Error::MixedSignFace { dim: d, side: side.name(), min, max });
            };
        }
        labels.push(dim_labels);
        bn_range.push(dim_range);
    }
    Ok(FaceClassification { labels, bn_range })
}

/// Extends the grid by m cell layers beyond every outflow face.
pub fn extend_grid(grid: &TensorGrid, m: usize, faces: &FaceClassification) -> TensorGrid {
    let mut out = grid.clone();
    for d in 0..grid.dim {
        let h = grid.h(d);
        if faces.label(d, Side::Right) == FaceLabel::Outflow {
            out.b[d] += m as f64 * h;
            out.n_h[d] += m;
        }
        if faces.label(d, Side::Left) == FaceLabel::Outflow {
            out.a[d] -= m as f64 * h;
            out.n_h[d] += m;
        }
    }
    out.extension_layers = m;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(b: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
        move |_| b.clone()
    }

    #[test]
    fn diagonal_advection_classification() {
        let g = TensorGrid::unit(2, 8);
        let c = classify_faces(&g, constant(vec![0.866, 0.5]), 5).unwrap();
        assert_eq!(c.label(0, Side::Left), FaceLabel::Inflow);
        assert_eq!(c.label(0, Side::Right), FaceLabel::Outflow);
        assert_eq!(c.label(1, Side::Left), FaceLabel::Inflow);
        assert_eq!(c.label(1, Side::Right), FaceLabel::Outflow);
    }

    #[test]
    fn rotating_field_classification_tolerates_corner_zeros() {
        // b = (1 - y, x): left/bottom inflow, right/top outflow, with b*n = 0
        // at single corners of each face.
        let g = TensorGrid::unit(2, 4);
        let c = classify_faces(&g, |x| vec![1.0 - x[1], x[0]], 9).unwrap();
        assert_eq!(c.label(0, Side::Left), FaceLabel::Inflow);
        assert_eq!(c.label(0, Side::Right), FaceLabel::Outflow);
        assert_eq!(c.label(1, Side::Left), FaceLabel::Inflow);
        assert_eq!(c.label(1, Side::Right), FaceLabel::Outflow);
        // Bottom face sees b*n = -x, exactly zero at x = 0.
        assert_eq!(c.bn_range[1][0].1, 0.0);
    }

    #[test]
    fn zero_component_gives_characteristic_faces() {
        let g = TensorGrid::unit(2, 4);
        let c = classify_faces(&g, constant(vec![1.0, 0.0]), 3).unwrap();
        assert_eq!(c.label(1, Side::Left), FaceLabel::Characteristic);
        assert_eq!(c.label(1, Side::Right), FaceLabel::Characteristic);
    }

    #[test]
    fn sign_change_across_face_is_an_error() {
        let g = TensorGrid::unit(2, 4);
        let r = classify_faces(&g, |x| vec![x[1] - 0.5, 1.0], 9);
        assert!(matches!(r, Err(crate::Error::MixedSignFace { dim: 0, .. })));
    }

    #[test]
    fn extension_adds_layers_beyond_outflow_only() {
        let g = TensorGrid::unit(2, 8);
        let c = classify_faces(&g, constant(vec![0.866, 0.5]), 3).unwrap();
        let e = extend_grid(&g, 2, &c);
        assert_eq!(e.n_h, vec![10, 10]);
        assert_eq!(e.a, vec![0.0, 0.0]);
        assert_eq!(e.b, vec![1.25, 1.25]);
        assert_eq!(e.extension_layers, 2);
        assert!((e.h(0) - g.h(0)).abs() < 1e-15);
    }

    #[test]
    fn extension_skips_characteristic_dimensions() {
        let g = TensorGrid::unit(2, 4);
        let c = classify_faces(&g, constant(vec![1.0, 0.0]), 3).unwrap();
        let e = extend_grid(&g, 1, &c);
        assert_eq!(e.n_h, vec![5, 4]);
        assert_eq!(e.b, vec![1.25, 1.0]);
    }

    #[test]
    fn cell_lookup_follows_left_closed_convention() {
        let g = TensorGrid::unit(2, 4);
        assert_eq!(g.cell_of(&[0.25, 0.5]), Some(vec![1, 2]));
        assert_eq!(g.cell_of(&[1.0, 1.0]), Some(vec![3, 3]));
        assert_eq!(g.cell_of(&[-0.1, 0.5]), None);
    }

    proptest! {
        #[test]
        fn cell_indexing_round_trips(
            n0 in 1usize..6, n1 in 1usize..6, n2 in 1usize..4,
            flat_seed in 0usize..1000,
        ) {
            let g = TensorGrid::new(vec![n0, n1, n2], vec![0.0; 3], vec![1.0, 2.0, 0.5]);
            let flat = flat_seed % g.n_cells();
            let multi = g.cell_multi(flat);
            prop_assert_eq!(g.cell_flat(&multi), flat);
            let mid = g.cell_midpoint(&multi);
            prop_assert_eq!(g.cell_of(&mid), Some(multi));
        }
    }
}
