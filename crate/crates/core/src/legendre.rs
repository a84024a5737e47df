//! Legendre polynomials on [-1, 1] and Gauss–Legendre quadrature.

use std::f64::consts::PI;

/// Values of `P_0..=P_degree` and their first two derivatives at `x`.
///
/// Returned as three vectors `(p, dp, d2p)` of length `degree + 1`.
pub fn legendre_with_derivatives(degree: usize, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = degree + 1;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut d2p = vec![0.0; n];
    p[0] = 1.0;
    if n > 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..degree {
        let kf = k as f64;
        // (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}, differentiated term by term
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = ((2.0 * kf + 1.0) * (p[k] + x * dp[k]) - kf * dp[k - 1]) / (kf + 1.0);
        d2p[k + 1] = ((2.0 * kf + 1.0) * (2.0 * dp[k] + x * d2p[k]) - kf * d2p[k - 1]) / (kf + 1.0);
    }
    (p, dp, d2p)
}

/// Value of a Legendre series and its first two derivatives at `x` in [-1, 1].
pub fn series_with_derivatives(coeffs: &[f64], x: f64) -> [f64; 3] {
    if coeffs.is_empty() {
        return [0.0; 3];
    }
    let (p, dp, d2p) = legendre_with_derivatives(coeffs.len() - 1, x);
    let mut out = [0.0; 3];
    for (n, c) in coeffs.iter().enumerate() {
        out[0] += c * p[n];
        out[1] += c * dp[n];
        out[2] += c * d2p[n];
    }
    out
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
