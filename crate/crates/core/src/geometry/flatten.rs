use nalgebra::SMatrix;

use super::{tangential_norm, InterfaceGraph, Point};
use crate::{Error, Result};

fn bump_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn bump_exp_prime(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp() / (t * t)
    } else {
        0.0
    }
}

/// Smooth cutoff: `τ = 1` on `[−1,1]`, `τ = 0` outside `(−2,2)`, `|τ'| ≤ 2`.
///
/// Built from `e^{−1/t}` glued as `f(2−|s|) / (f(2−|s|) + f(|s|−1))`; the
/// transition has its steepest slope, exactly 2, at `|s| = 3/2`.
pub fn tau(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= 2.0 {
        return 0.0;
    }
    let p = bump_exp(2.0 - a);
    let q = bump_exp(a - 1.0);
    p / (p + q)
}

pub fn tau_prime(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 || a >= 2.0 {
        return 0.0;
    }
    let p = bump_exp(2.0 - a);
    let q = bump_exp(a - 1.0);
    let dp = -bump_exp_prime(2.0 - a);
    let dq = bump_exp_prime(a - 1.0);
    let d = (dp * q - p * dq) / ((p + q) * (p + q));
    d * s.signum()
}

/// The diffeomorphism `Φ(x) = (x', x_n − φ(x') τ(|x'|/r1) τ(x_n/r1))` in
/// local coordinates centred at the anchor of `graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatteningMap {
    pub graph: InterfaceGraph,
    pub r1: f64,
}

const INVERT_MAX_ITER: usize = 500;

impl FlatteningMap {
    /// Uses `r1 = (r0/3) min{(8M)^{-1/α}/2, 1/4}`.
    pub fn new(graph: InterfaceGraph) -> Self {
        let r1 = graph.r0 / 3.0 * (0.5 * (8.0 * graph.m).powf(-1.0 / graph.alpha)).min(0.25);
        Self { graph, r1 }
    }

    pub fn with_r1(graph: InterfaceGraph, r1: f64) -> Result<Self> {
        if !(r1 > 0.0) {
            return Err(Error::InvalidArgument("r1 must be positive".into()));
        }
        Ok(Self { graph, r1 })
    }

    fn phi<const N: usize>(&self, x: &Point<N>) -> f64 {
        // graph profiles are 2-D; for N > 3 only the first two tangential
        // coordinates enter.
        let x2 = if N > 2 { x[1] } else { 0.0 };
        self.graph.phi(x[0], x2)
    }

    fn displacement<const N: usize>(&self, x: &Point<N>, xn: f64) -> f64 {
        self.phi(x) * tau(tangential_norm(x) / self.r1) * tau(xn / self.r1)
    }

    pub fn eval<const N: usize>(&self, x: &Point<N>) -> Point<N> {
        let mut xi = *x;
        xi[N - 1] = x[N - 1] - self.displacement(x, x[N - 1]);
        xi
    }

    /// `DΦ(x)`.
    pub fn jacobian<const N: usize>(&self, x: &Point<N>) -> Result<SMatrix<f64, N, N>> {
        let r1 = self.r1;
        let rho = tangential_norm(x);
        let x2 = if N > 2 { x[1] } else { 0.0 };
        let phi = self.graph.phi(x[0], x2);
        let gphi = self.graph.phi_gradient(x[0], x2);
        let (t_tan, dt_tan) = (tau(rho / r1), tau_prime(rho / r1));
        let (t_n, dt_n) = (tau(x[N - 1] / r1), tau_prime(x[N - 1] / r1));
        let mut j = SMatrix::<f64, N, N>::identity();
        for i in 0..N - 1 {
            let dphi = match i {
                0 => gphi[0],
                1 => gphi[1],
                _ => 0.0,
            };
            let radial = if rho > 0.0 { dt_tan * x[i] / (rho * r1) } else { 0.0 };
            j[(N - 1, i)] = -(dphi * t_tan + phi * radial) * t_n;
        }
        j[(N - 1, N - 1)] = 1.0 - phi * t_tan * dt_n / r1;
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonDifferentiable { point: x.iter().copied().collect() });
        }
        Ok(j)
    }

    /// `Φ^{-1}(ξ)` by damped fixed-point iteration on the scalar equation
    /// `x_n − φ(ξ') τ(|ξ'|/r1) τ(x_n/r1) = ξ_n`.
    pub fn invert<const N: usize>(&self, xi: &Point<N>, tol: f64) -> Result<Point<N>> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let lateral = self.phi(xi) * tau(tangential_norm(xi) / self.r1);
        let target = xi[N - 1];
        let residual = |xn: f64| xn - lateral * tau(xn / self.r1) - target;
        let mut x = *xi;
        if lateral == 0.0 {
            return Ok(x);
        }
        for damping in [1.0, 0.5, 0.25] {
            let mut xn = target + lateral;
            for _ in 0..INVERT_MAX_ITER {
                let r = residual(xn);
                if r.abs() <= tol {
                    x[N - 1] = xn;
                    return Ok(x);
                }
                xn -= damping * r;
            }
        }
        let xn = target;
        Err(Error::NoConvergence { iterations: 3 * INVERT_MAX_ITER, residual: residual(xn).abs() })
    }
}
