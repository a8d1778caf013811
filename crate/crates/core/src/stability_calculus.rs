//! Scalar stability calculus: logarithmic weights `ω_b`, the geometric
//! cascade and the `δ_k` recursion behind the Lipschitz budget.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `e^{-2}`, the plateau of every `ω_b`.
pub const PLATEAU: f64 = 1.0 / (E * E);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaWeight {
    pub b: f64,
}

impl OmegaWeight {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("ω exponent must be positive, got {b}")));
        }
        Ok(Self { b })
    }

    /// `2^b e^{-2} |log t|^{-b}` below `e^{-2}`, `e^{-2}` above.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("ω is defined for t > 0, got {t}")));
        }
        if t >= PLATEAU {
            return Ok(PLATEAU);
        }
        Ok(2f64.powf(self.b) * PLATEAU * (-t.ln()).powf(-self.b))
    }

    /// `j`-fold composition.
    pub fn iterate(&self, j: usize, t: f64) -> Result<f64> {
        if j < 1 {
            return Err(Error::Domain("iterate count must be at least 1".into()));
        }
        let mut v = t;
        for _ in 0..j {
            v = self.eval(v)?;
        }
        Ok(v)
    }

    /// `exp(−2 (e^{-2}/s)^{1/b})`, the inverse on the increasing branch.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < PLATEAU) {
            return Err(Error::Domain(format!("ω is not invertible at {s}; need 0 < s < e^-2")));
        }
        Ok((-2.0 * (PLATEAU / s).powf(1.0 / self.b)).exp())
    }

    /// `−log` of the `j`-fold inverse, kept in log form since the values
    /// underflow after a couple of steps. Infinite when it overflows.
    pub fn inverse_iterate_neg_log(&self, j: usize, s: f64) -> Result<f64> {
        let mut u = -self.inverse(s)?.ln();
        for _ in 1..j {
            if !u.is_finite() {
                return Ok(f64::INFINITY);
            }
            // s = e^{-u} < e^{-2} requires u > 2
            if !(u > 2.0) {
                return Err(Error::Domain("inverse iterate left the invertible branch".into()));
            }
            u = 2.0 * (self.b.recip() * (u - 2.0)).exp();
        }
        Ok(u)
    }

    /// `j`-fold inverse; may underflow to 0.
    pub fn inverse_iterate(&self, j: usize, s: f64) -> Result<f64> {
        if j < 1 {
            return Err(Error::Domain("iterate count must be at least 1".into()));
        }
        Ok((-self.inverse_iterate_neg_log(j, s)?).exp())
    }
}

/// Cascade of balls: angles, ratio and the geometric sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub lipschitz: f64,
    pub r0: f64,
    /// `arctan(1/L)`.
    pub cascade_angle: f64,
    pub beta1: f64,
    pub a: f64,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub d: Vec<f64>,
}

pub fn cascade(lipschitz: f64, r0: f64, kmax: usize) -> Result<CascadeParams> {
    if !(lipschitz > 0.0) || !(r0 > 0.0) || kmax < 1 {
        return Err(Error::Domain("cascade needs L > 0, r0 > 0 and kmax ≥ 1".into()));
    }
    let beta = (1.0 / lipschitz).atan();
    let beta1 = (beta.sin() / 4.0).atan();
    let s1 = beta1.sin();
    let lambda1 = r0 / (1.0 + s1);
    let rho1 = lambda1 * s1;
    let a = (1.0 - s1) / (1.0 + s1);
    let mut lambda = vec![lambda1];
    let mut rho = vec![rho1];
    for k in 1..kmax {
        lambda.push(a * lambda[k - 1]);
        rho.push(a * rho[k - 1]);
    }
    let d = lambda.iter().zip(&rho).map(|(l, r)| l - r).collect();
    Ok(CascadeParams { lipschitz, r0, cascade_angle: beta, beta1, a, lambda, rho, d })
}

impl CascadeParams {
    /// `d_k` for any `k ≥ 1`, beyond the stored sequence as well.
    pub fn d_at(&self, k: usize) -> f64 {
        if k <= self.d.len() {
            self.d[k - 1]
        } else {
            self.d[self.d.len() - 1] * self.a.powi((k - self.d.len()) as i32)
        }
    }
}

/// `min{k : d_k ≤ r}`.
pub fn h_bar(c: &CascadeParams, r: f64) -> Result<usize> {
    let d1 = c.d[0];
    if !(r > 0.0 && r <= d1) {
        return Err(Error::Domain(format!("h̄ needs 0 < r ≤ d1 = {d1}, got {r}")));
    }
    let mut k = 1;
    while c.d_at(k) > r {
        k += 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub epsilon: f64,
    pub e: f64,
    pub c: f64,
    pub k: usize,
    pub n: usize,
    /// Iterate count of the closing bound; `K²` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<usize>,
}

impl BudgetInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) || !(self.e >= 0.0 && self.e.is_finite()) {
            return Err(Error::Domain("ε and E must be finite and nonnegative".into()));
        }
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(Error::Domain("C must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(Error::Domain("K must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `E ≤ ε e²`: the estimate holds with constant `e²`.
    Trivial,
    Recursion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub inputs: BudgetInputs,
    pub delta_sequence: Vec<f64>,
    pub final_bound: f64,
    pub branch: Branch,
    pub lipschitz_constant: f64,
}

/// `ω(t)` extended by `ω(0) = 0`.
fn omega_at(w: &OmegaWeight, j: usize, t: f64) -> Result<f64> {
    if t == 0.0 {
        Ok(0.0)
    } else {
        w.iterate(j, t)
    }
}

/// `δ_k = δ_{k−1} + C (ε + δ_{k−1} + E) (ω_{1/C}^{(2(k+1))}(ε/(ε + δ_{k−1} + E)))^{1/C}`
/// from `δ_0 = 0`, then the closing estimate.
pub fn delta_recursion(inputs: &BudgetInputs) -> Result<Budget> {
    inputs.validate()?;
    let BudgetInputs { epsilon, e, c, k, .. } = *inputs;
    let w = OmegaWeight::new(1.0 / c)?;
    let mut delta = vec![0.0];
    for kk in 1..=k {
        let prev = delta[kk - 1];
        let mass = epsilon + prev + e;
        let step = if mass == 0.0 { 0.0 } else { c * mass * omega_at(&w, 2 * (kk + 1), epsilon / mass)?.powf(1.0 / c) };
        delta.push(prev + step);
    }
    let trivial_constant = E * E;
    if e <= epsilon * trivial_constant {
        return Ok(Budget {
            inputs: *inputs,
            delta_sequence: delta,
            final_bound: trivial_constant * epsilon,
            branch: Branch::Trivial,
            lipschitz_constant: trivial_constant,
        });
    }
    let iterates = inputs.iterates.unwrap_or(k * k).max(1);
    let lipschitz_constant = lipschitz_from(&w, iterates, c)?;
    let final_bound = if epsilon == 0.0 { 0.0 } else { epsilon * lipschitz_constant };
    Ok(Budget { inputs: *inputs, delta_sequence: delta, final_bound, branch: Branch::Recursion, lipschitz_constant })
}

/// `1 / ω_{1/C}^{(−m)}(1/C)`; when `1/C` sits on the plateau the first
/// inverse is taken just below it.
fn lipschitz_from(w: &OmegaWeight, m: usize, c: f64) -> Result<f64> {
    let s = (1.0 / c).min(PLATEAU * (1.0 - 1e-12));
    Ok(w.inverse_iterate_neg_log(m, s)?.exp())
}

/// Right-hand side `C (ε+E) (ω_{1/C}^{(m)}(ε/(ε+E)))^{1/C}` of the closing
/// inequality.
pub fn closing_rhs(inputs: &BudgetInputs) -> Result<f64> {
    inputs.validate()?;
    let w = OmegaWeight::new(1.0 / inputs.c)?;
    let mass = inputs.epsilon + inputs.e;
    if mass == 0.0 {
        return Ok(0.0);
    }
    let m = inputs.iterates.unwrap_or(inputs.k * inputs.k).max(1);
    Ok(inputs.c * mass * omega_at(&w, m, inputs.epsilon / mass)?.powf(1.0 / inputs.c))
}
