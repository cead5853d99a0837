//! Sparse SPD solvers: banded Cholesky on the natural tensor ordering, with a
//! Jacobi-preconditioned conjugate-gradient fallback when the band would
//! exceed the factorization memory cap.

use crate::assembly::CsrMatrix;
use crate::{Error, Result};

/// Upper bound on band-factor storage before falling back to iterations.
pub const BAND_MEMORY_CAP_BYTES: usize = 768 * 1024 * 1024;

/// Relative residual tolerance of the iterative fallback.
pub const CG_TOLERANCE: f64 = 1e-12;

const CG_MAX_ITERS: usize = 200_000;

/// A ready-to-use SPD factorization or iterative surrogate.
pub enum Factorization {
    Band(BandCholesky),
    Iterative { a: CsrMatrix, inv_diag: Vec<f64> },
}

/// Lower-triangular band factor L with A = L L^T, stored column-major.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// l[j * (bw + 1) + (i - j)] holds L[i][j] for j <= i <= j + bw.
    l: Vec<f64>,
}

impl Factorization {
    pub fn method(&self) -> String {
        match self {
            Factorization::Band(b) => format!("cholesky(bandwidth={})", b.bw),
            Factorization::Iterative { .. } => "pcg(jacobi)".to_string(),
        }
    }

    /// Solves A x = rhs to the factorization's accuracy.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Factorization::Band(b) => Ok(b.solve(rhs)),
            Factorization::Iterative { a, inv_diag } => pcg(a, inv_diag, rhs),
        }
    }
}

/// Factorizes an SPD matrix, choosing band Cholesky unless it would exceed the cap.
pub fn factorize(a: &CsrMatrix) -> Result<Factorization> {
    factorize_with_cap(a, BAND_MEMORY_CAP_BYTES)
}

/// Factorization with an explicit memory cap (test hook for the fallback path).
pub fn factorize_with_cap(a: &CsrMatrix, cap_bytes: usize) -> Result<Factorization> {
    let n = a.n_rows;
    let bw = bandwidth(a);
    let storage = n
        .checked_mul(bw + 1)
        .and_then(|x| x.checked_mul(8))
        .unwrap_or(usize::MAX);
    if storage > cap_bytes {
        let mut inv_diag = vec![0.0; n];
        for (i, d) in a.diagonal().into_iter().enumerate() {
            if d <= 0.0 {
                return Err(Error::NotSpd { row: i, pivot: d });
            }
            inv_diag[i] = 1.0 / d;
        }
        return Ok(Factorization::Iterative { a: a.clone(), inv_diag });
    }
    Ok(Factorization::Band(band_cholesky(a, bw)?))
}

fn bandwidth(a: &CsrMatrix) -> usize {
    let mut bw = 0;
    for i in 0..a.n_rows {
        let (cols, _) = a.row(i);
        for &j in cols {
            bw = bw.max(i.abs_diff(j));
        }
    }
    bw
}

fn band_cholesky(a: &CsrMatrix, bw: usize) -> Result<BandCholesky> {
    let n = a.n_rows;
    let stride = bw + 1;
    let mut l = vec![0.0; n * stride];
    // Load the lower triangle of A into band storage.
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                l[j * stride + (i - j)] = v;
            }
        }
    }
    for j in 0..n {
        let mut d = l[j * stride];
        let start = j.saturating_sub(bw);
        for k in start..j {
            let ljk = l[k * stride + (j - k)];
            d -= ljk * ljk;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotSpd { row: j, pivot: d });
        }
        let dj = d.sqrt();
        l[j * stride] = dj;
        let last = (j + bw).min(n - 1);
        for i in (j + 1)..=last {
            let mut s = l[j * stride + (i - j)];
            let kstart = i.saturating_sub(bw).max(start);
            for k in kstart..j {
                s -= l[k * stride + (i - k)] * l[k * stride + (j - k)];
            }
            l[j * stride + (i - j)] = s / dj;
        }
    }
    Ok(BandCholesky { n, bw, l })
}

impl BandCholesky {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        let mut x = rhs.to_vec();
        // Forward: L y = rhs.
        for j in 0..n {
            let y = x[j] / self.l[j * stride];
            x[j] = y;
            let last = (j + bw).min(n - 1);
            for i in (j + 1)..=last {
                x[i] -= self.l[j * stride + (i - j)] * y;
            }
        }
        // Backward: L^T x = y.
        for j in (0..n).rev() {
            let mut s = x[j];
            let last = (j + bw).min(n - 1);
            for i in (j + 1)..=last {
                s -= self.l[j * stride + (i - j)] * x[i];
            }
            x[j] = s / self.l[j * stride];
        }
        x
    }
}

fn pcg(a: &CsrMatrix, inv_diag: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let norm_rhs = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_rhs == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..CG_MAX_ITERS {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotSpd { row: 0, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= CG_TOLERANCE * norm_rhs {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::NoConvergence { iters: CG_MAX_ITERS, residual: rnorm / norm_rhs })
}
