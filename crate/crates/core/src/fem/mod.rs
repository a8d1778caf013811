//! P1 finite elements for `div(σ∇u) = 0`: assembly, Dirichlet solves,
//! point-source solves and energies.

mod green;

pub use green::{
    annulus_energy, cutoff, solve_green, source_load, solve_green_on, AnnulusEnergy, GreenApprox, GreenMedium, GreenMethod, GreenOptions,
    LocalInterface, SplitData,
};

use std::io::Write;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::Serialize;

use crate::conductivity::Conductivity;
use crate::geometry::{Point3, SimplicialMesh};
use crate::linalg::{pcg, CgInfo, CsrMatrix};
use crate::{Error, Result};

pub const CG_TOL: f64 = 1e-10;

/// Volume and barycentric-coordinate gradients of a tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub volume: f64,
    pub grads: [Vector3<f64>; 4],
}

pub fn element_geometry(mesh: &SimplicialMesh, e: usize) -> Result<ElementGeometry> {
    let t = mesh.elements[e];
    let v = &mesh.vertices;
    let d = Matrix3::from_columns(&[v[t[1]] - v[t[0]], v[t[2]] - v[t[0]], v[t[3]] - v[t[0]]]);
    let det = d.determinant();
    if !(det.abs() > 0.0) {
        return Err(Error::DegenerateElement { element: e, volume: det / 6.0 });
    }
    let inv = d.try_inverse().ok_or(Error::DegenerateElement { element: e, volume: det / 6.0 })?;
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    Ok(ElementGeometry { volume: det.abs() / 6.0, grads: [-(g1 + g2 + g3), g1, g2, g3] })
}

/// `|T| (∇λ_a)ᵀ σ ∇λ_b`
pub fn element_stiffness(geo: &ElementGeometry, sigma: &Matrix3<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|a, b| geo.volume * geo.grads[a].dot(&(sigma * geo.grads[b])))
}

/// Global stiffness matrix with its per-element data.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix,
    /// Dirichlet nodes: every node on the boundary.
    pub fixed: Vec<bool>,
    pub free: Vec<usize>,
    pub sigma: Vec<Matrix3<f64>>,
    pub geometry: Vec<ElementGeometry>,
}

/// Assembles with `σ` sampled once per element at its barycenter.
pub fn assemble<C: Conductivity + ?Sized>(mesh: &SimplicialMesh, cond: &C) -> Result<AssembledSystem> {
    let n = mesh.n_vertices();
    let mut trip = Vec::with_capacity(16 * mesh.n_elements());
    let mut sigma = Vec::with_capacity(mesh.n_elements());
    let mut geometry = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let geo = element_geometry(mesh, e)?;
        let s = cond.sigma_on(mesh.labels[e], &mesh.barycenter(e))?;
        let ke = element_stiffness(&geo, &s);
        let t = mesh.elements[e];
        for a in 0..4 {
            for b in 0..4 {
                trip.push((t[a], t[b], ke[(a, b)]));
            }
        }
        sigma.push(s);
        geometry.push(geo);
    }
    let stiffness = CsrMatrix::from_triplets(n, n, trip);
    let fixed = mesh.boundary_nodes();
    let free = (0..n).filter(|&i| !fixed[i]).collect();
    Ok(AssembledSystem { stiffness, fixed, free, sigma, geometry })
}

impl AssembledSystem {
    pub fn n_nodes(&self) -> usize {
        self.fixed.len()
    }

    /// Same mesh, `σ` replaced by `cσ`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            stiffness: self.stiffness.scaled(c),
            fixed: self.fixed.clone(),
            free: self.free.clone(),
            sigma: self.sigma.iter().map(|s| s * c).collect(),
            geometry: self.geometry.clone(),
        }
    }

    /// Solves `K u = f` on the free nodes with `u = g` on the fixed ones.
    /// `load` is a full-length nodal load vector; entries on fixed nodes are
    /// ignored.
    pub fn solve_with(&self, load: &[f64], g: &[f64]) -> Result<(DiscreteField, CgInfo)> {
        let n = self.n_nodes();
        let mut lift = vec![0.0; n];
        for i in 0..n {
            if self.fixed[i] {
                lift[i] = g[i];
            }
        }
        let kg = self.stiffness.mul_vec(&lift);
        let rhs: Vec<f64> = self.free.iter().map(|&i| load[i] - kg[i]).collect();
        let kff = self.stiffness.submatrix(&self.free, &self.free);
        let (x, info) = pcg(&kff, &rhs, None, CG_TOL, 20 * kff.n_rows + 1000)?;
        let mut u = lift;
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = x[k];
        }
        Ok((DiscreteField { values: u }, info))
    }

    /// `∫ σ ∇u·∇v`
    pub fn energy_pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        let kv = self.stiffness.mul_vec(v);
        u.iter().zip(&kv).map(|(a, b)| a * b).sum()
    }
}

/// Dirichlet problem with data `g` (read on the fixed nodes only).
pub fn solve_dirichlet(sys: &AssembledSystem, g: &[f64]) -> Result<(DiscreteField, CgInfo)> {
    if g.len() != sys.n_nodes() {
        return Err(Error::InvalidArgument(format!("boundary data has {} entries for {} nodes", g.len(), sys.n_nodes())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("boundary data must be finite".into()));
    }
    sys.solve_with(&vec![0.0; g.len()], g)
}

/// Nodal values over the mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn gradient_on(&self, mesh: &SimplicialMesh, geo: &ElementGeometry, e: usize) -> Vector3<f64> {
        let t = mesh.elements[e];
        (0..4).map(|a| geo.grads[a] * self.values[t[a]]).sum()
    }

    /// `vertex_index,x1,x2,x3,value`
    pub fn write_csv<W: Write>(&self, mesh: &SimplicialMesh, mut w: W) -> Result<()> {
        if self.values.len() != mesh.n_vertices() {
            return Err(Error::InvalidArgument("field length differs from vertex count".into()));
        }
        writeln!(w, "vertex_index,x1,x2,x3,value")?;
        for (i, (p, v)) in mesh.vertices.iter().zip(&self.values).enumerate() {
            writeln!(w, "{i},{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], p[2], v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_residual: f64,
    pub method: String,
}

impl From<&CgInfo> for SolverDiagnostics {
    fn from(i: &CgInfo) -> Self {
        Self { iterations: i.iterations, final_residual: i.final_residual, method: i.method.clone() }
    }
}

/// Nodal interpolant of a function.
pub fn interpolate(mesh: &SimplicialMesh, f: impl Fn(&Point3) -> f64) -> Vec<f64> {
    mesh.vertices.iter().map(f).collect()
}

/// `|u_h − u|_{H¹}` against an exact gradient, with an `order`-point tensor
/// rule per element.
pub fn h1_seminorm_error(
    mesh: &SimplicialMesh,
    sys: &AssembledSystem,
    u: &DiscreteField,
    exact_grad: impl Fn(&Point3) -> Vector3<f64>,
    order: usize,
) -> f64 {
    let rule = crate::quadrature::tet_rule(order);
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let geo = &sys.geometry[e];
        let gh = u.gradient_on(mesh, geo, e);
        let t = mesh.elements[e];
        for (l, w) in &rule {
            let x: Point3 = (0..4).map(|a| mesh.vertices[t[a]] * l[a]).sum();
            acc += w * geo.volume * (gh - exact_grad(&x)).norm_squared();
        }
    }
    acc.sqrt()
}
