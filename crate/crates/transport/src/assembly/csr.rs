//! Compressed sparse row matrices with the few operations assembly needs.

/// Sparse matrix in CSR form; columns are sorted per row and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row start offsets into `cols`/`vals`; length `n_rows + 1`.
    pub offsets: Vec<usize>,
    /// Column indices, strictly increasing within each row.
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed, exact zeros dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut offsets = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        let mut k = 0;
        while k < entries.len() {
            let (i, j, _) = entries[k];
            assert!(i < n_rows && j < n_cols, "triplet ({i}, {j}) out of bounds");
            let mut v = 0.0;
            while k < entries.len() && entries[k].0 == i && entries[k].1 == j {
                v += entries[k].2;
                k += 1;
            }
            if v != 0.0 {
                offsets[i + 1] += 1;
                cols.push(j);
                vals.push(v);
            }
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        CsrMatrix { n_rows, n_cols, offsets, cols, vals }
    }

    /// Identity of size n.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            offsets: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    /// Diagonal matrix from the given entries (zeros dropped).
    pub fn diag(d: &[f64]) -> Self {
        let triplets: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &triplets)
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row i.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// Transpose.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.cols {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = counts;
        for i in 0..self.n_rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                let k = next[j];
                cols[k] = i;
                vals[k] = v;
                next[j] += 1;
            }
        }
        CsrMatrix { n_rows: self.n_cols, n_cols: self.n_rows, offsets, cols, vals }
    }

    /// Matrix-matrix product self * other.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows, "inner dimensions must agree");
        let n_cols = other.n_cols;
        let mut offsets = vec![0usize; self.n_rows + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut acc = vec![0.0; n_cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.n_rows {
            for (&k, &a) in self.row(i).0.iter().zip(self.row(i).1) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    cols.push(j);
                    vals.push(acc[j]);
                    offsets[i + 1] += 1;
                }
                acc[j] = 0.0;
            }
            touched.clear();
        }
        for i in 0..self.n_rows {
            offsets[i + 1] += offsets[i];
        }
        CsrMatrix { n_rows: self.n_rows, n_cols, offsets, cols, vals }
    }

    /// Kronecker product self (x) other.
    pub fn kron(&self, other: &Self) -> Self {
        let n_rows = self.n_rows * other.n_rows;
        let n_cols = self.n_cols * other.n_cols;
        let nnz = self.nnz() * other.nnz();
        let mut offsets = Vec::with_capacity(n_rows + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for i1 in 0..self.n_rows {
            let (c1, v1) = self.row(i1);
            for i2 in 0..other.n_rows {
                let (c2, v2) = other.row(i2);
                for (&j1, &a) in c1.iter().zip(v1) {
                    for (&j2, &b) in c2.iter().zip(v2) {
                        let v = a * b;
                        if v != 0.0 {
                            cols.push(j1 * other.n_cols + j2);
                            vals.push(v);
                        }
                    }
                }
                offsets.push(cols.len());
            }
        }
        CsrMatrix { n_rows, n_cols, offsets, cols, vals }
    }

    /// Sum of scaled matrices with matching shapes.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Self {
        assert!(!terms.is_empty());
        let (n_rows, n_cols) = (terms[0].1.n_rows, terms[0].1.n_cols);
        for &(_, m) in terms {
            assert_eq!((m.n_rows, m.n_cols), (n_rows, n_cols), "shape mismatch");
        }
        let mut offsets = vec![0usize; n_rows + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut acc = vec![0.0; n_cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..n_rows {
            for &(s, m) in terms {
                let (rc, rv) = m.row(i);
                for (&j, &v) in rc.iter().zip(rv) {
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += s * v;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    cols.push(j);
                    vals.push(acc[j]);
                    offsets[i + 1] += 1;
                }
                acc[j] = 0.0;
            }
            touched.clear();
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        CsrMatrix { n_rows, n_cols, offsets, cols, vals }
    }

    /// Left-multiplies by a diagonal matrix: diag(d) * self.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n_rows);
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                triplets.push((i, j, d[i] * v));
            }
        }
        Self::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Main diagonal as a dense vector.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute deviation from symmetry, max |A - A^T|.
    pub fn symmetry_gap(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let t = self.transpose();
        Self::linear_combination(&[(1.0, self), (-1.0, &t)]).max_abs()
    }

    /// Dense row-major copy (for tests and small oracles).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                d[i * self.n_cols + j] = v;
            }
        }
        d
    }

    /// Checks structural invariants (offset monotonicity, sorted columns, no zeros).
    pub fn check_invariants(&self) {
        assert_eq!(self.offsets.len(), self.n_rows + 1);
        assert_eq!(self.offsets[0], 0);
        assert_eq!(*self.offsets.last().unwrap(), self.vals.len());
        assert_eq!(self.cols.len(), self.vals.len());
        for i in 0..self.n_rows {
            assert!(self.offsets[i] <= self.offsets[i + 1]);
            let (rc, rv) = self.row(i);
            for k in 0..rc.len() {
                assert!(rc[k] < self.n_cols);
                if k > 0 {
                    assert!(rc[k] > rc[k - 1], "row {i} columns not strictly increasing");
                }
                assert!(rv[k] != 0.0, "explicit zero stored at ({i}, {})", rc[k]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * m];
        for i in 0..n {
            for l in 0..k {
                for j in 0..m {
                    c[i * m + j] += a[i * k + l] * b[l * m + j];
                }
            }
        }
        c
    }

    #[test]
    fn from_triplets_sums_duplicates_and_drops_zeros() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            &[(0, 1, 2.0), (0, 1, 3.0), (1, 0, 1.5), (1, 2, 4.0), (1, 2, -4.0)],
        );
        m.check_invariants();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.get(1, 2), 0.0);
    }

    #[test]
    fn spmv_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, -3.0)]);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, -3.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let m = CsrMatrix::from_triplets(3, 2, &[(0, 1, 1.0), (2, 0, -2.5), (1, 1, 4.0)]);
        let t = m.transpose();
        t.check_invariants();
        assert_eq!(t.get(1, 0), 1.0);
        assert_eq!(t.get(0, 2), -2.5);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn kron_with_identity_preserves() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 0, 1.0)]);
        let i = CsrMatrix::identity(3);
        let k = m.kron(&i);
        k.check_invariants();
        assert_eq!(k.n_rows, 6);
        for r in 0..3 {
            assert_eq!(k.get(r, r), 2.0);
            assert_eq!(k.get(3 + r, r), 1.0);
        }
    }

    #[test]
    fn kron_matches_dense_reference() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]);
        let b = CsrMatrix::from_triplets(2, 2, &[(0, 1, -1.0), (1, 0, 4.0)]);
        let k = a.kron(&b);
        let (da, db, dk) = (a.to_dense(), b.to_dense(), k.to_dense());
        for i1 in 0..2 {
            for i2 in 0..2 {
                for j1 in 0..2 {
                    for j2 in 0..2 {
                        let expect = da[i1 * 2 + j1] * db[i2 * 2 + j2];
                        assert_eq!(dk[(i1 * 2 + i2) * 4 + j1 * 2 + j2], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_combination_cancels_structurally() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]);
        let c = CsrMatrix::linear_combination(&[(2.0, &a), (-2.0, &a)]);
        c.check_invariants();
        assert_eq!(c.nnz(), 0);
    }

    #[test]
    fn diag_and_scale_rows() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let s = m.scale_rows(&[2.0, -1.0]);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), -1.0);
        let d = CsrMatrix::diag(&[3.0, 0.0, 5.0]);
        d.check_invariants();
        assert_eq!(d.nnz(), 2);
        assert_eq!(d.diagonal(), vec![3.0, 0.0, 5.0]);
    }

    #[test]
    fn symmetry_gap_detects_asymmetry() {
        let sym = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0), (0, 0, 2.0)]);
        assert_eq!(sym.symmetry_gap(), 0.0);
        let asym = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.5)]);
        assert_eq!(asym.symmetry_gap(), 0.5);
    }

    proptest! {
        #[test]
        fn matmul_matches_dense(
            ta in proptest::collection::vec((0usize..4, 0usize..3, -5i32..5), 0..20),
            tb in proptest::collection::vec((0usize..3, 0usize..5, -5i32..5), 0..20),
        ) {
            let ta: Vec<_> = ta.into_iter().map(|(i, j, v)| (i, j, v as f64)).collect();
            let tb: Vec<_> = tb.into_iter().map(|(i, j, v)| (i, j, v as f64)).collect();
            let a = CsrMatrix::from_triplets(4, 3, &ta);
            let b = CsrMatrix::from_triplets(3, 5, &tb);
            let c = a.matmul(&b);
            c.check_invariants();
            let expect = dense_matmul(&a.to_dense(), &b.to_dense(), 4, 3, 5);
            let got = c.to_dense();
            for (x, y) in got.iter().zip(&expect) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn triplet_invariants_hold(
            t in proptest::collection::vec((0usize..6, 0usize..6, -3i32..3), 0..40),
        ) {
            let t: Vec<_> = t.into_iter().map(|(i, j, v)| (i, j, v as f64)).collect();
            let m = CsrMatrix::from_triplets(6, 6, &t);
            m.check_invariants();
            let mut dense = vec![0.0; 36];
            for &(i, j, v) in &t {
                dense[i * 6 + j] += v;
            }
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert!((m.get(i, j) - dense[i * 6 + j]).abs() < 1e-12);
                }
            }
        }
    }
}
