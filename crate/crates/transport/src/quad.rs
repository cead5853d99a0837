//! Gauss-Legendre quadrature rules.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]; exact for degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev initial guess, sharpened by Newton iteration on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, d) = legendre(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        // Derivative refreshed at the converged node for full-precision weights.
        let (_, dp) = legendre(n, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Value and derivative of the Legendre polynomial P_n at z in (-1, 1).
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// The n-point rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

/// Composite Gauss quadrature of f over [a, b] split into equal cells.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize, q: usize) -> f64 {
    let h = (b - a) / cells as f64;
    let (x, w) = gauss_legendre(q);
    let mut cell_sums = Vec::with_capacity(cells);
    for k in 0..cells {
        let mid = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (t, wi) in x.iter().zip(&w) {
            s += wi * f(mid + 0.5 * h * t);
        }
        cell_sums.push(0.5 * h * s);
    }
    cell_sums.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule_is_midpoint() {
        let (x, w) = gauss_legendre(1);
        assert_eq!(x, vec![0.0]);
        assert_eq!(w, vec![2.0]);
    }

    #[test]
    fn two_point_nodes() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15);
        assert!((x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_point_rule() {
        let (x, w) = gauss_legendre(3);
        let r = (3f64 / 5.0).sqrt();
        assert!((x[0] + r).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
        assert!((x[2] - r).abs() < 1e-15);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in 1..=32 {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n}: weight sum {s}");
        }
    }

    #[test]
    fn nodes_sorted_symmetric_interior() {
        for n in 1..=32 {
            let (x, _) = gauss_legendre(n);
            for i in 0..n {
                assert!(x[i].abs() < 1.0);
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
                if i > 0 {
                    assert!(x[i] > x[i - 1]);
                }
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n {
                let approx: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!(
                    (approx - exact).abs() < 1e-13,
                    "n={n} k={k}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn mapped_rule_integrates_cubic() {
        let (x, w) = gauss_legendre_on(2, 1.0, 3.0);
        let s: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t * t * t).sum();
        // int_1^3 t^3 dt = (81 - 1) / 4 = 20
        assert!((s - 20.0).abs() < 1e-13);
    }

    #[test]
    fn composite_rule_handles_kinks() {
        // int_0^1 |t - 0.5| dt = 0.25, exact once cells align with the kink.
        let v = integrate(|t| (t - 0.5).abs(), 0.0, 1.0, 2, 3);
        assert!((v - 0.25).abs() < 1e-14);
    }
}
