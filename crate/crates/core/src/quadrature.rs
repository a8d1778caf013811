//! Gauss–Legendre rules and collapsed-coordinate tetrahedron rules.

use std::f64::consts::PI;

/// `n`-point Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        x[0] = 0.0;
        w[0] = 2.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (m, h) = ((a + b) * 0.5, (b - a) * 0.5);
    x.iter().zip(&w).map(|(x, w)| (m + h * x, h * w)).collect()
}

/// Tetrahedron rule in barycentric coordinates from a Duffy-collapsed
/// tensor Gauss rule with `n` points per direction. Weights sum to 1, so
/// multiply by the element volume.
pub fn tet_rule(n: usize) -> Vec<([f64; 4], f64)> {
    let g = gauss_on(n, 0.0, 1.0);
    let mut out = Vec::with_capacity(n * n * n);
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            for &(w, ww) in &g {
                let l1 = u;
                let l2 = (1.0 - u) * v;
                let l3 = (1.0 - u) * (1.0 - v) * w;
                let l0 = 1.0 - l1 - l2 - l3;
                let jac = 6.0 * (1.0 - u) * (1.0 - u) * (1.0 - v);
                out.push(([l0, l1, l2, l3], wu * wv * ww * jac));
            }
        }
    }
    out
}
