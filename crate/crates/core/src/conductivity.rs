//! Conformal anisotropic conductivities `σ = γ_j A(x)` on a layered partition.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::{D0Geometry, LayeredPartition, Point3};
use crate::{Error, Result};

const SYM_TOL: f64 = 1e-12;

/// Closed form of the known matrix field `A(x)`.
#[derive(Debug, Clone)]
pub enum FieldKind {
    Identity,
    Constant(Matrix3<f64>),
    /// `A(x) = C + Σ_i x_i L_i`
    Affine { constant: Matrix3<f64>, linear: [Matrix3<f64>; 3] },
    /// Entry-wise expressions in `x1, x2, x3`.
    Expr(Box<[[meval::Expr; 3]; 3]>),
}

/// Lipschitz, uniformly elliptic matrix field with its claimed constants.
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub kind: FieldKind,
    /// Claimed Lipschitz bound `Ā` (spectral norm of differences).
    pub lipschitz: f64,
    /// Ellipticity `λ ≥ 1`: eigenvalues in `[1/λ, λ]`.
    pub lambda: f64,
}

impl MatrixField {
    pub fn identity() -> Self {
        Self { kind: FieldKind::Identity, lipschitz: 1.0, lambda: 1.0 }
    }

    pub fn constant(m: Matrix3<f64>) -> Self {
        let eig = SymmetricEigen::new(m).eigenvalues;
        let lambda = eig.max().max(1.0 / eig.min()).max(1.0);
        Self { kind: FieldKind::Constant(m), lipschitz: 1.0, lambda }
    }

    pub fn affine(constant: Matrix3<f64>, linear: [Matrix3<f64>; 3], lipschitz: f64, lambda: f64) -> Self {
        Self { kind: FieldKind::Affine { constant, linear }, lipschitz, lambda }
    }

    pub fn eval(&self, x: &Point3) -> Matrix3<f64> {
        match &self.kind {
            FieldKind::Identity => Matrix3::identity(),
            FieldKind::Constant(m) => *m,
            FieldKind::Affine { constant, linear } => constant + linear[0] * x[0] + linear[1] * x[1] + linear[2] * x[2],
            FieldKind::Expr(e) => {
                let mut ctx = meval::Context::new();
                ctx.var("x1", x[0]).var("x2", x[1]).var("x3", x[2]);
                Matrix3::from_fn(|i, j| e[i][j].eval_with_context(&ctx).unwrap_or(f64::NAN))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FieldKind::Identity | FieldKind::Constant(_))
    }
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm(m: &Matrix3<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.amax()
}

/// A member of the admissible class: `γ_j A(x)` on layer `j`.
#[derive(Debug, Clone)]
pub struct ClassCConductivity {
    pub gamma: Vec<f64>,
    pub gamma_bar: f64,
    pub field: MatrixField,
    pub partition: LayeredPartition,
}

/// Conductivity that can be evaluated per element by the FEM assembler.
pub trait Conductivity {
    /// `σ` at `x` for an element carrying subdomain `label`.
    fn sigma_on(&self, label: usize, x: &Point3) -> Result<Matrix3<f64>>;
}

impl ClassCConductivity {
    pub fn new(gamma: Vec<f64>, gamma_bar: f64, field: MatrixField, partition: LayeredPartition) -> Result<Self> {
        if gamma.len() != partition.n_subdomains() {
            return Err(Error::PartitionMismatch(format!(
                "{} conductivity values for {} subdomains",
                gamma.len(),
                partition.n_subdomains()
            )));
        }
        if !(gamma_bar > 0.0 && gamma_bar <= 1.0) {
            return Err(Error::InvalidArgument("gamma_bar must lie in (0,1]".into()));
        }
        Ok(Self { gamma, gamma_bar, field, partition })
    }

    pub fn n_subdomains(&self) -> usize {
        self.gamma.len()
    }

    /// `γ_j A(x)` for the layer `j` containing `x`.
    pub fn sigma_eval(&self, x: &Point3) -> Result<Matrix3<f64>> {
        let j = self.partition.label_of(x).ok_or(Error::OutsideDomain { point: [x[0], x[1], x[2]] })?;
        Ok(self.field.eval(x) * self.gamma[j - 1])
    }

    /// Same partition and field, every `γ_j` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { gamma: self.gamma.iter().map(|g| g * c).collect(), ..self.clone() }
    }

    pub fn with_gamma(&self, gamma: Vec<f64>) -> Result<Self> {
        Self::new(gamma, self.gamma_bar, self.field.clone(), self.partition.clone())
    }
}

impl Conductivity for ClassCConductivity {
    fn sigma_on(&self, label: usize, x: &Point3) -> Result<Matrix3<f64>> {
        if label == 0 || label > self.gamma.len() {
            return Err(Error::OutsideDomain { point: [x[0], x[1], x[2]] });
        }
        Ok(self.field.eval(x) * self.gamma[label - 1])
    }
}

/// Deterministic sampling of the unit box: nodes and cell centres of a
/// uniform 16-cell lattice.
pub fn default_samples() -> Vec<Point3> {
    lattice_samples(16)
}

pub fn lattice_samples(cells: usize) -> Vec<Point3> {
    let mut pts = Vec::new();
    let c = cells as f64;
    for k in 0..=cells {
        for j in 0..=cells {
            for i in 0..=cells {
                pts.push(Point3::new(i as f64 / c, j as f64 / c, k as f64 / c));
            }
        }
    }
    for k in 0..cells {
        for j in 0..cells {
            for i in 0..cells {
                pts.push(Point3::new((i as f64 + 0.5) / c, (j as f64 + 0.5) / c, (k as f64 + 0.5) / c));
            }
        }
    }
    pts
}

/// One failed sampled check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    GammaBound { index: usize, value: f64, gamma_bar: f64 },
    Asymmetric { point: [f64; 3], defect: f64 },
    Ellipticity { point: [f64; 3], eigenvalue: f64, lambda: f64 },
    Lipschitz { p: [f64; 3], q: [f64; 3], quotient: f64, bound: f64 },
    NonFinite { point: [f64; 3] },
}

/// Sampled validation; empty iff every check passes.
pub fn validate_class(cond: &ClassCConductivity) -> Vec<Violation> {
    let mut out = Vec::new();
    for (j, &g) in cond.gamma.iter().enumerate() {
        let gb = cond.gamma_bar;
        if !(g >= gb * (1.0 - SYM_TOL) && g <= (1.0 / gb) * (1.0 + SYM_TOL)) {
            out.push(Violation::GammaBound { index: j + 1, value: g, gamma_bar: gb });
        }
    }
    out.extend(validate_field(&cond.field, 8));
    out
}

/// Sampled symmetry, ellipticity and Lipschitz checks of `A` on a lattice
/// with `cells` cells per axis (difference quotients between lattice
/// neighbours, diagonals included).
pub fn validate_field(field: &MatrixField, cells: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = cells + 1;
    let at = |i: usize, j: usize, k: usize| Point3::new(i as f64, j as f64, k as f64) / cells as f64;
    let mut values = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                values.push(field.eval(&at(i, j, k)));
            }
        }
    }
    let idx = |i: usize, j: usize, k: usize| i + n * (j + n * k);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = at(i, j, k);
                let a = values[idx(i, j, k)];
                let pa = [p[0], p[1], p[2]];
                if a.iter().any(|v| !v.is_finite()) {
                    out.push(Violation::NonFinite { point: pa });
                    continue;
                }
                let defect = (a - a.transpose()).amax();
                if defect > SYM_TOL * a.amax().max(1.0) {
                    out.push(Violation::Asymmetric { point: pa, defect });
                }
                let eig = SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues;
                let (lo, hi) = (eig.min(), eig.max());
                let lam = field.lambda;
                if lo < (1.0 / lam) * (1.0 - SYM_TOL) {
                    out.push(Violation::Ellipticity { point: pa, eigenvalue: lo, lambda: lam });
                } else if hi > lam * (1.0 + SYM_TOL) {
                    out.push(Violation::Ellipticity { point: pa, eigenvalue: hi, lambda: lam });
                }
                for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)] {
                    if i + di < n && j + dj < n && k + dk < n {
                        let q = at(i + di, j + dj, k + dk);
                        let b = values[idx(i + di, j + dj, k + dk)];
                        let quotient = spectral_norm(&(a - b)) / (p - q).norm();
                        if quotient > field.lipschitz * (1.0 + 1e-9) + 1e-12 {
                            out.push(Violation::Lipschitz { p: pa, q: [q[0], q[1], q[2]], quotient, bound: field.lipschitz });
                        }
                    }
                }
            }
        }
    }
    out
}

/// `Ω_0 = Ω ∪ D_0` with `γ̃ = 1` on `D_0` and `Ã(x) = A(nearest point of Ω)`.
#[derive(Debug, Clone)]
pub struct ExtendedConductivity {
    pub base: ClassCConductivity,
    pub d0: D0Geometry,
    /// `γ̃` on `D_0`; 1 unless the whole conductivity was rescaled.
    pub d0_gamma: f64,
}

pub fn extend_to_augmented(cond: &ClassCConductivity, d0: D0Geometry) -> Result<ExtendedConductivity> {
    d0.validate()?;
    Ok(ExtendedConductivity { base: cond.clone(), d0, d0_gamma: 1.0 })
}

fn clamp_to_box(x: &Point3) -> Point3 {
    x.map(|v| v.clamp(0.0, 1.0))
}

impl ExtendedConductivity {
    pub fn extended_gamma(&self, label: usize) -> f64 {
        if label == 0 {
            self.d0_gamma
        } else {
            self.base.gamma[label - 1]
        }
    }

    pub fn extended_field(&self, x: &Point3) -> Matrix3<f64> {
        self.base.field.eval(&clamp_to_box(x))
    }

    pub fn sigma_eval(&self, x: &Point3) -> Result<Matrix3<f64>> {
        if let Some(j) = self.base.partition.label_of(x) {
            return Ok(self.base.field.eval(x) * self.base.gamma[j - 1]);
        }
        if self.d0.contains(x) {
            return Ok(self.extended_field(x) * self.d0_gamma);
        }
        Err(Error::OutsideDomain { point: [x[0], x[1], x[2]] })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { base: self.base.scaled(c), d0: self.d0, d0_gamma: self.d0_gamma * c }
    }
}

impl Conductivity for ExtendedConductivity {
    fn sigma_on(&self, label: usize, x: &Point3) -> Result<Matrix3<f64>> {
        if label == 0 {
            return Ok(self.extended_field(x) * self.d0_gamma);
        }
        self.base.sigma_on(label, x)
    }
}

/// `max_x ‖σ¹(x) − σ²(x)‖₂` over the default samples.
pub fn linf_distance(c1: &ClassCConductivity, c2: &ClassCConductivity) -> Result<f64> {
    linf_distance_on(c1, c2, &default_samples())
}

pub fn linf_distance_on(c1: &ClassCConductivity, c2: &ClassCConductivity, samples: &[Point3]) -> Result<f64> {
    if c1.partition != c2.partition || c1.gamma.len() != c2.gamma.len() {
        return Err(Error::PartitionMismatch("conductivities live on different partitions".into()));
    }
    let mut best: f64 = 0.0;
    for x in samples {
        let d = c1.sigma_eval(x)? - c2.sigma_eval(x)?;
        best = best.max(spectral_norm(&d));
    }
    Ok(best)
}

/// JSON description of a conductivity, without its partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConductivitySpec {
    pub gamma: Vec<f64>,
    pub gamma_bar: f64,
    #[serde(rename = "A", default = "default_field_name")]
    pub field: String,
    #[serde(rename = "A_params", default)]
    pub params: serde_json::Value,
}

fn default_field_name() -> String {
    "identity".into()
}

#[derive(Debug, Deserialize)]
struct AffineParams {
    constant: [[f64; 3]; 3],
    #[serde(default)]
    linear: [[[f64; 3]; 3]; 3],
    lipschitz: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ExprParams {
    entries: [[String; 3]; 3],
    lipschitz: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ConstantParams {
    matrix: [[f64; 3]; 3],
}

fn mat(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

/// Fills in `Ā` and `λ` from the sampled field when not supplied.
fn estimate_constants(kind: FieldKind, lipschitz: Option<f64>, lambda: Option<f64>) -> MatrixField {
    let mut field = MatrixField { kind, lipschitz: f64::INFINITY, lambda: f64::INFINITY };
    if lipschitz.is_some() && lambda.is_some() {
        field.lipschitz = lipschitz.unwrap();
        field.lambda = lambda.unwrap();
        return field;
    }
    let pts = lattice_samples(8);
    let mut lam: f64 = 1.0;
    for p in &pts {
        let e = SymmetricEigen::new(field.eval(p)).eigenvalues;
        lam = lam.max(e.max()).max(1.0 / e.min());
    }
    let mut lip: f64 = 0.0;
    for v in validate_field(&MatrixField { lipschitz: 0.0, ..field.clone() }, 8) {
        if let Violation::Lipschitz { quotient, .. } = v {
            lip = lip.max(quotient);
        }
    }
    field.lipschitz = lipschitz.unwrap_or(lip.max(1e-12) * (1.0 + 1e-9));
    field.lambda = lambda.unwrap_or(lam);
    field
}

impl ConductivitySpec {
    pub fn build_field(&self) -> Result<MatrixField> {
        let cfg = |e: serde_json::Error| Error::Config(format!("A_params: {e}"));
        match self.field.as_str() {
            "identity" => Ok(MatrixField::identity()),
            "constant" => {
                let p: ConstantParams = serde_json::from_value(self.params.clone()).map_err(cfg)?;
                Ok(MatrixField::constant(mat(&p.matrix)))
            }
            "affine" => {
                let p: AffineParams = serde_json::from_value(self.params.clone()).map_err(cfg)?;
                let kind = FieldKind::Affine {
                    constant: mat(&p.constant),
                    linear: [mat(&p.linear[0]), mat(&p.linear[1]), mat(&p.linear[2])],
                };
                Ok(estimate_constants(kind, p.lipschitz, p.lambda))
            }
            "expr" => {
                let p: ExprParams = serde_json::from_value(self.params.clone()).map_err(cfg)?;
                let mut parsed: Vec<meval::Expr> = Vec::with_capacity(9);
                for row in &p.entries {
                    for s in row {
                        let e: meval::Expr = s.parse().map_err(|e| Error::Config(format!("expression `{s}`: {e}")))?;
                        parsed.push(e);
                    }
                }
                let mut it = parsed.into_iter();
                let mut next = || it.next().unwrap();
                let grid = [[next(), next(), next()], [next(), next(), next()], [next(), next(), next()]];
                Ok(estimate_constants(FieldKind::Expr(Box::new(grid)), p.lipschitz, p.lambda))
            }
            other => Err(Error::Config(format!("unknown matrix field `{other}`"))),
        }
    }

    pub fn build(&self, partition: LayeredPartition) -> Result<ClassCConductivity> {
        ClassCConductivity::new(self.gamma.clone(), self.gamma_bar, self.build_field()?, partition)
    }
}

/// Stable identifier of a conductivity for dump sidecars.
pub fn conductivity_id(cond: &ClassCConductivity) -> String {
    let kind = match &cond.field.kind {
        FieldKind::Identity => "identity".to_string(),
        FieldKind::Constant(m) => format!("constant{:?}", m.as_slice()),
        FieldKind::Affine { constant, linear } => format!(
            "affine{:?}{:?}{:?}{:?}",
            constant.as_slice(),
            linear[0].as_slice(),
            linear[1].as_slice(),
            linear[2].as_slice()
        ),
        FieldKind::Expr(_) => "expr".to_string(),
    };
    format!("gamma={:?};A={}", cond.gamma, kind)
}
