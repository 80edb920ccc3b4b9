//! Reference computations written independently of the library code.

use std::f64::consts::PI;

/// erf(z) for z >= 0 by the positive-term series
/// `2/sqrt(pi) e^{-z^2} sum 2^n z^{2n+1} / (1 3 ... (2n+1))`.
fn erf_series(z: f64) -> f64 {
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    while term > sum * 1e-17 {
        n += 1.0;
        term *= 2.0 * z * z / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-z * z).exp() * sum
}

/// erfc(z) for z >= 3 by the Laplace continued fraction (modified Lentz).
fn erfc_fraction(z: f64) -> f64 {
    // erfc(z) = e^{-z^2}/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = z + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = z + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / PI.sqrt() / f
}

/// Standard normal CDF from the erf oracles above.
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let upper_tail = if z < 3.0 { 0.5 * (1.0 - erf_series(z)) } else { 0.5 * erfc_fraction(z) };
    if x >= 0.0 {
        1.0 - upper_tail
    } else {
        upper_tail
    }
}

/// Gauss–Hermite nodes and weights for the weight `e^{-x^2}` by the
/// Golub–Welsch eigenvalue method, each node polished by Newton steps on
/// the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in order {
        let mut z = eig.eigenvalues[k];
        let mut derivative = 0.0;
        for _ in 0..3 {
            let (p, dp) = hermite_orthonormal(n, z);
            derivative = dp;
            z -= p / dp;
        }
        nodes.push(z);
        // w = 1 / sum_j p_j(z)^2 = 2 / (n p'_n(z)^2 / (2n)) with orthonormal p.
        weights.push(2.0 / (derivative * derivative));
    }
    (nodes, weights)
}

/// Orthonormal Hermite `p_n(z)` and `sqrt(2n) p_{n-1}(z)`, its derivative
/// at a root.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// `E[phi(Z)]` for standard normal `Z` by Gauss–Hermite quadrature.
pub fn gaussian_expectation(nodes: &(Vec<f64>, Vec<f64>), phi: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = nodes;
    x.iter()
        .zip(w)
        .map(|(&xi, &wi)| wi * phi(std::f64::consts::SQRT_2 * xi))
        .sum::<f64>()
        / PI.sqrt()
}

/// Kolmogorov–Smirnov statistic of a sample against Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
