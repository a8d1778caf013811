use serde::{Deserialize, Serialize};

use super::Point3;

/// Shape of an interface graph in local coordinates centred at its anchor.
/// Every profile satisfies `φ(0) = |∇φ(0)| = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphProfile {
    Flat,
    /// `c1 x1² + c2 x2²`
    Quadratic { c1: f64, c2: f64 },
    /// `coef |x'|^exponent`, exponent > 1. With exponent `1 + α` this is
    /// exactly `C^{1,α}` at the origin.
    Power { coef: f64, exponent: f64 },
}

impl GraphProfile {
    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        match *self {
            GraphProfile::Flat => 0.0,
            GraphProfile::Quadratic { c1, c2 } => c1 * x1 * x1 + c2 * x2 * x2,
            GraphProfile::Power { coef, exponent } => coef * (x1 * x1 + x2 * x2).powf(exponent / 2.0),
        }
    }

    pub fn gradient(&self, x1: f64, x2: f64) -> [f64; 2] {
        match *self {
            GraphProfile::Flat => [0.0, 0.0],
            GraphProfile::Quadratic { c1, c2 } => [2.0 * c1 * x1, 2.0 * c2 * x2],
            GraphProfile::Power { coef, exponent } => {
                let r2 = x1 * x1 + x2 * x2;
                if r2 == 0.0 {
                    return [0.0, 0.0];
                }
                let s = coef * exponent * r2.powf(exponent / 2.0 - 1.0);
                [s * x1, s * x2]
            }
        }
    }

    pub fn is_flat(&self) -> bool {
        match *self {
            GraphProfile::Flat => true,
            GraphProfile::Quadratic { c1, c2 } => c1 == 0.0 && c2 == 0.0,
            GraphProfile::Power { coef, .. } => coef == 0.0,
        }
    }
}

/// A `C^{1,α}` interface `x_3 = anchor_3 + φ(x' − anchor')`, with the
/// regularity constants it is claimed to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceGraph {
    pub profile: GraphProfile,
    pub anchor: [f64; 3],
    pub r0: f64,
    pub m: f64,
    pub alpha: f64,
}

/// Outcome of the sampled regularity checks on the fixed 33×33 grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub value_at_origin: f64,
    pub gradient_at_origin: f64,
    pub sup_norm: f64,
    pub gradient_sup: f64,
    pub holder_seminorm: f64,
    /// `‖φ‖_∞ + r0 ‖∇φ‖_∞ + r0^{1+α} |∇φ|_α`
    pub normalized_norm: f64,
    pub bound: f64,
    pub ok: bool,
}

const REGULARITY_GRID: usize = 33;
const ORIGIN_TOL: f64 = 1e-9;

impl InterfaceGraph {
    pub fn new(profile: GraphProfile, anchor: [f64; 3], r0: f64, m: f64, alpha: f64) -> crate::Result<Self> {
        if !(r0 > 0.0 && m > 0.0) {
            return Err(crate::Error::InvalidArgument("r0 and M must be positive".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(crate::Error::InvalidArgument(format!("alpha must lie in (0,1], got {alpha}")));
        }
        if let GraphProfile::Power { exponent, .. } = profile {
            if exponent <= 1.0 {
                return Err(crate::Error::InvalidArgument("power profile needs exponent > 1".into()));
            }
        }
        Ok(Self { profile, anchor, r0, m, alpha })
    }

    /// Flat graph at height `z` anchored at the centre of the top face footprint.
    pub fn flat(z: f64) -> Self {
        Self {
            profile: GraphProfile::Flat,
            anchor: [0.5, 0.5, z],
            r0: 0.5,
            m: 1.0,
            alpha: 1.0,
        }
    }

    /// Local graph function `φ(x')` with `φ(0) = 0`.
    pub fn phi(&self, x1: f64, x2: f64) -> f64 {
        self.profile.value(x1, x2)
    }

    pub fn phi_gradient(&self, x1: f64, x2: f64) -> [f64; 2] {
        self.profile.gradient(x1, x2)
    }

    /// Global height of the interface above `(x1, x2)`.
    pub fn height(&self, x1: f64, x2: f64) -> f64 {
        self.anchor[2] + self.profile.value(x1 - self.anchor[0], x2 - self.anchor[1])
    }

    pub fn anchor_point(&self) -> Point3 {
        Point3::new(self.anchor[0], self.anchor[1], self.anchor[2])
    }

    /// Upward unit normal of the graph at global tangential position `(x1, x2)`.
    pub fn upward_normal(&self, x1: f64, x2: f64) -> Point3 {
        let g = self.profile.gradient(x1 - self.anchor[0], x2 - self.anchor[1]);
        Point3::new(-g[0], -g[1], 1.0).normalize()
    }

    /// Samples `φ` on a 33×33 grid over `B'_{r0}` and checks the normalisation
    /// at the origin and `‖φ‖_{C^{1,α}} ≤ M r0`. Gradients are central finite
    /// differences with step `r0·1e-5`.
    pub fn check_regularity(&self) -> RegularityReport {
        let r0 = self.r0;
        let step = r0 * 1e-5;
        let fd_grad = |x1: f64, x2: f64| {
            [
                (self.phi(x1 + step, x2) - self.phi(x1 - step, x2)) / (2.0 * step),
                (self.phi(x1, x2 + step) - self.phi(x1, x2 - step)) / (2.0 * step),
            ]
        };
        let mut samples: Vec<([f64; 2], f64, [f64; 2])> = Vec::new();
        let n = REGULARITY_GRID;
        for i in 0..n {
            for j in 0..n {
                let x1 = -r0 + 2.0 * r0 * i as f64 / (n - 1) as f64;
                let x2 = -r0 + 2.0 * r0 * j as f64 / (n - 1) as f64;
                if x1 * x1 + x2 * x2 <= r0 * r0 * (1.0 + 1e-12) {
                    samples.push(([x1, x2], self.phi(x1, x2), fd_grad(x1, x2)));
                }
            }
        }
        let sup_norm = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
        let gradient_sup = samples
            .iter()
            .map(|s| s.2[0].hypot(s.2[1]))
            .fold(0.0, f64::max);
        let mut holder: f64 = 0.0;
        for (a, sa) in samples.iter().enumerate() {
            for sb in &samples[a + 1..] {
                let d = (sa.0[0] - sb.0[0]).hypot(sa.0[1] - sb.0[1]);
                let dg = (sa.2[0] - sb.2[0]).hypot(sa.2[1] - sb.2[1]);
                holder = holder.max(dg / d.powf(self.alpha));
            }
        }
        let g0 = fd_grad(0.0, 0.0);
        let value_at_origin = self.phi(0.0, 0.0);
        let gradient_at_origin = g0[0].hypot(g0[1]);
        let normalized_norm = sup_norm + r0 * gradient_sup + r0.powf(1.0 + self.alpha) * holder;
        let bound = self.m * r0;
        let ok = value_at_origin.abs() <= ORIGIN_TOL
            && gradient_at_origin <= ORIGIN_TOL.sqrt()
            && normalized_norm <= bound;
        RegularityReport {
            value_at_origin,
            gradient_at_origin,
            sup_norm,
            gradient_sup,
            holder_seminorm: holder,
            normalized_norm,
            bound,
            ok,
        }
    }
}
