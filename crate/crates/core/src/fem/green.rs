//! Discrete Green's functions `G(·, y)` with a point source at `y`.
//!
//! `Split` subtracts the locally frozen two-phase kernel and solves for a
//! bounded remainder; `Mollified` replaces the delta by a normalized hat of
//! radius `2h`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{assemble, AssembledSystem, DiscreteField};
use crate::conductivity::{ClassCConductivity, Conductivity, ExtendedConductivity};
use crate::geometry::{FlatteningMap, InterfaceGraph, Point3, SimplicialMesh};
use crate::kernels::{AnisoTwoPhaseKernel, Side};
use crate::linalg::CgInfo;
use crate::quadrature::tet_rule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenMethod {
    Split,
    Mollified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenOptions {
    pub method: GreenMethod,
    /// Overrides the cutoff radius `ρ` of the split method.
    pub cutoff_radius: Option<f64>,
    /// Evaluation guard in units of the local mesh size.
    pub guard_factor: f64,
    /// Levels of 1→8 refinement for elements touching the source.
    pub refine_depth: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self { method: GreenMethod::Split, cutoff_radius: None, guard_factor: 4.0, refine_depth: 4 }
    }
}

impl GreenOptions {
    pub fn with_method(method: GreenMethod) -> Self {
        Self { method, ..Self::default() }
    }
}

/// The interface nearest to a source, frozen to a horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalInterface {
    pub height: f64,
    pub gamma_below: f64,
    pub gamma_above: f64,
    /// `A` at the projection of the source onto the plane.
    pub a0: Matrix3<f64>,
    /// Flattening radius of the interface graph; `None` without interfaces.
    pub r1: Option<f64>,
}

/// Media that can describe the interface seen from a source point.
pub trait GreenMedium: Conductivity {
    fn local_interface(&self, y: &Point3) -> Result<LocalInterface>;
}

fn nearest_flat(candidates: &[(InterfaceGraph, f64, f64)], y: &Point3, field: impl Fn(&Point3) -> Matrix3<f64>) -> Result<Option<LocalInterface>> {
    let best = candidates
        .iter()
        .min_by(|a, b| {
            let da = (a.0.height(y[0], y[1]) - y[2]).abs();
            let db = (b.0.height(y[0], y[1]) - y[2]).abs();
            da.total_cmp(&db)
        });
    let Some((graph, below, above)) = best else { return Ok(None) };
    if !graph.profile.is_flat() {
        return Err(Error::CurvedInterface);
    }
    let height = graph.height(y[0], y[1]);
    let p = Point3::new(y[0], y[1], height);
    Ok(Some(LocalInterface {
        height,
        gamma_below: *below,
        gamma_above: *above,
        a0: field(&p),
        r1: Some(FlatteningMap::new(graph.clone()).r1),
    }))
}

impl GreenMedium for ClassCConductivity {
    fn local_interface(&self, y: &Point3) -> Result<LocalInterface> {
        let cands: Vec<_> = self
            .partition
            .interfaces
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), self.gamma[i], self.gamma[i + 1]))
            .collect();
        if let Some(li) = nearest_flat(&cands, y, |p| self.field.eval(p))? {
            return Ok(li);
        }
        let g = self.sigma_on(1, y).map(|_| self.gamma[0])?;
        Ok(LocalInterface { height: y[2] - 10.0, gamma_below: g, gamma_above: g, a0: self.field.eval(y), r1: None })
    }
}

impl GreenMedium for ExtendedConductivity {
    fn local_interface(&self, y: &Point3) -> Result<LocalInterface> {
        let base = &self.base;
        let mut cands: Vec<_> = base
            .partition
            .interfaces
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), base.gamma[i], base.gamma[i + 1]))
            .collect();
        cands.push((InterfaceGraph::flat(1.0), *base.gamma.last().unwrap(), self.d0_gamma));
        Ok(nearest_flat(&cands, y, |p| self.extended_field(p))?.expect("Σ is always a candidate"))
    }
}

/// Kernel data of the split method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitData {
    pub kernel: AnisoTwoPhaseKernel<3>,
    pub height: f64,
    pub gamma_below: f64,
    pub rho: f64,
}

impl SplitData {
    fn frame(&self, x: &Point3) -> Point3 {
        Point3::new(x[0], x[1], x[2] - self.height)
    }

    /// Frozen kernel `S(x, y)`.
    pub fn singular(&self, x: &Point3, y: &Point3) -> Result<f64> {
        Ok(self.kernel.eval(&self.frame(x), &self.frame(y))? / self.gamma_below)
    }

    pub fn singular_grad(&self, x: &Point3, y: &Point3) -> Result<Vector3<f64>> {
        let xi = self.frame(x);
        let side = if xi[2] == 0.0 { Some(Side::Lower) } else { None };
        Ok(self.kernel.grad(&xi, &self.frame(y), side)? / self.gamma_below)
    }

    /// Conductivity the frozen kernel solves with.
    pub fn sigma0(&self, x: &Point3) -> Matrix3<f64> {
        self.kernel.sigma(&self.frame(x)) * self.gamma_below
    }
}

/// Smooth cutoff: 1 on `[0, ρ]`, 0 beyond `2ρ`, quintic in between.
/// Returns `(χ, χ')`.
pub fn cutoff(r: f64, rho: f64) -> (f64, f64) {
    if r <= rho {
        return (1.0, 0.0);
    }
    if r >= 2.0 * rho {
        return (0.0, 0.0);
    }
    let s = (r - rho) / rho;
    let v = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let d = -30.0 * s * s * (1.0 - s) * (1.0 - s) / rho;
    (v, d)
}

/// `G_h(·, y)` as singular part plus nodal remainder.
#[derive(Debug, Clone)]
pub struct GreenApprox {
    pub y: Point3,
    pub method: GreenMethod,
    pub split: Option<SplitData>,
    /// Nodal remainder (the whole solution for the mollified method).
    pub w: DiscreteField,
    /// Evaluations closer than this to `y` are refused.
    pub r_min: f64,
    pub info: CgInfo,
}

impl GreenApprox {
    fn singular_part(&self, x: &Point3) -> Result<(f64, Vector3<f64>)> {
        let Some(s) = &self.split else { return Ok((0.0, Vector3::zeros())) };
        let d = x - self.y;
        let r = d.norm();
        let (chi, dchi) = cutoff(r, s.rho);
        if chi == 0.0 {
            return Ok((0.0, Vector3::zeros()));
        }
        let v = s.singular(x, &self.y)?;
        let g = s.singular_grad(x, &self.y)?;
        Ok((chi * v, g * chi + d * (dchi * v / r)))
    }

    /// `G_h(x, y)`; refuses points inside the guard radius.
    pub fn eval(&self, mesh: &SimplicialMesh, x: &Point3) -> Result<f64> {
        let r = (x - self.y).norm();
        if r < self.r_min {
            return Err(Error::BelowResolution { radius: r, guard: self.r_min });
        }
        self.eval_unguarded(mesh, x)
    }

    /// `G_h(x, y)` without the guard; `x = y` is still singular for the
    /// split method.
    pub fn eval_unguarded(&self, mesh: &SimplicialMesh, x: &Point3) -> Result<f64> {
        let w = mesh
            .locator()
            .interpolate(&self.w.values, x)
            .ok_or(Error::OutsideDomain { point: [x[0], x[1], x[2]] })?;
        Ok(self.singular_part(x)?.0 + w)
    }

    /// `∇_x G_h` inside element `e`.
    pub fn grad_in(&self, mesh: &SimplicialMesh, sys: &AssembledSystem, e: usize, x: &Point3) -> Result<Vector3<f64>> {
        Ok(self.singular_part(x)?.1 + self.w.gradient_on(mesh, &sys.geometry[e], e))
    }

    /// Nodal values of the full approximation; the node at `y` (split
    /// method) gets the remainder only.
    pub fn nodal_values(&self, mesh: &SimplicialMesh) -> Result<Vec<f64>> {
        mesh.vertices
            .iter()
            .zip(&self.w.values)
            .map(|(p, w)| if (p - self.y).norm() == 0.0 { Ok(*w) } else { Ok(self.singular_part(p)?.0 + w) })
            .collect()
    }
}

fn element_points(mesh: &SimplicialMesh, e: usize) -> [Point3; 4] {
    mesh.elements[e].map(|v| mesh.vertices[v])
}

fn bounding_sphere(p: &[Point3; 4]) -> (Point3, f64) {
    let c = (p[0] + p[1] + p[2] + p[3]) * 0.25;
    let r = p.iter().map(|q| (q - c).norm()).fold(0.0, f64::max);
    (c, r)
}

const MIDS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// The 8 children of a tetrahedron given by barycentric corner vectors.
fn subdivide(c: &[[f64; 4]; 4]) -> [[[f64; 4]; 4]; 8] {
    let mid = |i: usize, j: usize| -> [f64; 4] { std::array::from_fn(|k| 0.5 * (c[i][k] + c[j][k])) };
    let m: Vec<[f64; 4]> = MIDS.iter().map(|&(i, j)| mid(i, j)).collect();
    let (m01, m02, m03, m12, m13, m23) = (m[0], m[1], m[2], m[3], m[4], m[5]);
    [
        [c[0], m01, m02, m03],
        [m01, c[1], m12, m13],
        [m02, m12, c[2], m23],
        [m03, m13, m23, c[3]],
        [m01, m02, m03, m13],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ]
}

fn to_point(p: &[Point3; 4], l: &[f64; 4]) -> Point3 {
    p[0] * l[0] + p[1] * l[1] + p[2] * l[2] + p[3] * l[3]
}

/// Adaptive quadrature over one element. `refine(centre, radius)` decides
/// whether a sub-tetrahedron is split further; `f(x, λ, w)` receives points
/// with their element barycentric coordinates and absolute weights.
fn integrate_adaptive(
    p: &[Point3; 4],
    volume: f64,
    depth: usize,
    rule: &[([f64; 4], f64)],
    refine: &dyn Fn(&Point3, f64) -> bool,
    f: &mut dyn FnMut(&Point3, &[f64; 4], f64) -> Result<()>,
) -> Result<()> {
    let unit = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let mut stack = vec![(unit, volume, 0usize)];
    while let Some((c, vol, d)) = stack.pop() {
        let corners = [to_point(p, &c[0]), to_point(p, &c[1]), to_point(p, &c[2]), to_point(p, &c[3])];
        let (centre, radius) = bounding_sphere(&corners);
        if d < depth && refine(&centre, radius) {
            for child in subdivide(&c) {
                stack.push((child, vol / 8.0, d + 1));
            }
            continue;
        }
        for (q, w) in rule {
            let l: [f64; 4] = std::array::from_fn(|k| (0..4).map(|j| q[j] * c[j][k]).sum());
            f(&to_point(p, &l), &l, w * vol)?;
        }
    }
    Ok(())
}

fn split_load(
    mesh: &SimplicialMesh,
    sys: &AssembledSystem,
    y: &Point3,
    split: &SplitData,
    depth: usize,
) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.n_vertices()];
    let outer = 2.0 * split.rho;
    let rule = tet_rule(4);
    for e in 0..mesh.n_elements() {
        let p = element_points(mesh, e);
        let (c, rad) = bounding_sphere(&p);
        if (c - y).norm() - rad >= outer {
            continue;
        }
        let geo = &sys.geometry[e];
        let sig = sys.sigma[e];
        let t = mesh.elements[e];
        let mut acc = [0.0; 4];
        let near = |c: &Point3, r: f64| (c - y).norm() < 2.0 * r;
        integrate_adaptive(&p, geo.volume, depth, &rule, &near, &mut |x, l, w| {
            let d = x - y;
            let r = d.norm();
            if r >= outer || r == 0.0 {
                return Ok(());
            }
            let (chi, dchi) = cutoff(r, split.rho);
            let s = split.singular(x, y)?;
            let gs = split.singular_grad(x, y)?;
            let gchi = d * (dchi / r);
            let s0 = split.sigma0(x);
            let flux_diff = (s0 - sig) * gs * chi;
            let src = (s0 * gs).dot(&gchi);
            let sg = sig * gchi * s;
            for a in 0..4 {
                acc[a] += w * (flux_diff.dot(&geo.grads[a]) + l[a] * src - sg.dot(&geo.grads[a]));
            }
            Ok(())
        })?;
        for a in 0..4 {
            load[t[a]] += acc[a];
        }
    }
    Ok(load)
}

fn mollified_load(mesh: &SimplicialMesh, sys: &AssembledSystem, y: &Point3, radius: f64) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.n_vertices()];
    let rule = tet_rule(3);
    for e in 0..mesh.n_elements() {
        let p = element_points(mesh, e);
        let (c, rad) = bounding_sphere(&p);
        if (c - y).norm() - rad >= radius {
            continue;
        }
        let t = mesh.elements[e];
        let mut acc = [0.0; 4];
        let near = |c: &Point3, r: f64| ((c - y).norm() - radius).abs() < r || (c - y).norm() < r;
        integrate_adaptive(&p, sys.geometry[e].volume, 2, &rule, &near, &mut |x, l, w| {
            let b = (1.0 - (x - y).norm() / radius).max(0.0);
            for a in 0..4 {
                acc[a] += w * b * l[a];
            }
            Ok(())
        })?;
        for a in 0..4 {
            load[t[a]] += acc[a];
        }
    }
    let total: f64 = load.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("source bump does not meet the mesh".into()));
    }
    load.iter_mut().for_each(|v| *v /= total);
    Ok(load)
}

/// Normalized nodal load of the mollified source at `y` (hat of radius
/// `2h(y)`).
pub fn source_load(mesh: &SimplicialMesh, sys: &AssembledSystem, y: &Point3) -> Result<Vec<f64>> {
    mollified_load(mesh, sys, y, 2.0 * mesh.local_size(y))
}

/// Assembles and solves for `G(·, y)` with default options.
pub fn solve_green<M: GreenMedium>(mesh: &SimplicialMesh, cond: &M, y: &Point3, method: GreenMethod) -> Result<GreenApprox> {
    let sys = assemble(mesh, cond)?;
    solve_green_on(mesh, &sys, cond, y, &GreenOptions::with_method(method))
}

/// Solves for `G(·, y)` on an already assembled system. `cond` must be the
/// conductivity `sys` was assembled with.
pub fn solve_green_on<M: GreenMedium + ?Sized>(
    mesh: &SimplicialMesh,
    sys: &AssembledSystem,
    cond: &M,
    y: &Point3,
    opts: &GreenOptions,
) -> Result<GreenApprox> {
    let h = mesh.local_size(y);
    let dist = mesh.distance_to_boundary(y);
    if !(dist >= 2.0 * h) {
        return Err(Error::SourceTooClose { distance: dist, required: 2.0 * h });
    }
    let r_min = opts.guard_factor * h;
    match opts.method {
        GreenMethod::Mollified => {
            let load = source_load(mesh, sys, y)?;
            let (w, info) = sys.solve_with(&load, &vec![0.0; mesh.n_vertices()])?;
            Ok(GreenApprox { y: *y, method: GreenMethod::Mollified, split: None, w, r_min, info })
        }
        GreenMethod::Split => {
            let li = cond.local_interface(y)?;
            let rho = match (opts.cutoff_radius, li.r1) {
                (Some(r), _) => r,
                (None, Some(r1)) => (r1 / 4.0).min(dist / 3.0),
                (None, None) => dist / 3.0,
            };
            if !(rho > 0.0) || 2.0 * rho >= dist {
                return Err(Error::InvalidArgument(format!("cutoff radius {rho} does not fit inside the domain")));
            }
            let kernel = AnisoTwoPhaseKernel::new(&li.a0, li.gamma_above / li.gamma_below)?;
            let split = SplitData { kernel, height: li.height, gamma_below: li.gamma_below, rho };
            let load = split_load(mesh, sys, y, &split, opts.refine_depth)?;
            let (w, info) = sys.solve_with(&load, &vec![0.0; mesh.n_vertices()])?;
            Ok(GreenApprox { y: *y, method: GreenMethod::Split, split: Some(split), w, r_min, info })
        }
    }
}

/// `∫_{Ω∖B_r(y)} |∇G|²` and `∫_{Ω∖B_r(y)} σ∇G·∇G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusEnergy {
    pub plain: f64,
    pub weighted: f64,
}

/// Energy of `G` outside `B_r(y)`. Requires `r ≥ 4 h(y)`; elements cut by
/// the sphere are refined before point-wise masking. For the split method
/// with `r < 2ρ` the result carries the discretization error of the
/// remainder in the cutoff shell, which is large unless `h ≪ ρ`.
pub fn annulus_energy(g: &GreenApprox, mesh: &SimplicialMesh, sys: &AssembledSystem, r: f64) -> Result<AnnulusEnergy> {
    let guard = 4.0 * mesh.local_size(&g.y);
    if !(r >= guard) {
        return Err(Error::BelowResolution { radius: r, guard });
    }
    let y = g.y;
    let reach = g.split.map_or(0.0, |s| 2.0 * s.rho);
    let rule = tet_rule(3);
    let mut plain = 0.0;
    let mut weighted = 0.0;
    for e in 0..mesh.n_elements() {
        let p = element_points(mesh, e);
        let (c, rad) = bounding_sphere(&p);
        let dc = (c - y).norm();
        if dc + rad <= r {
            continue;
        }
        let geo = &sys.geometry[e];
        let sig = sys.sigma[e];
        let gw = g.w.gradient_on(mesh, geo, e);
        if dc - rad >= r && dc - rad >= reach {
            plain += geo.volume * gw.norm_squared();
            weighted += geo.volume * gw.dot(&(sig * gw));
            continue;
        }
        let cut = |c: &Point3, rr: f64| ((c - y).norm() - r).abs() < rr;
        integrate_adaptive(&p, geo.volume, 4, &rule, &cut, &mut |x, _, w| {
            if (x - y).norm() < r {
                return Ok(());
            }
            let gr = g.singular_part(x)?.1 + gw;
            plain += w * gr.norm_squared();
            weighted += w * gr.dot(&(sig * gr));
            Ok(())
        })?;
    }
    Ok(AnnulusEnergy { plain, weighted })
}
