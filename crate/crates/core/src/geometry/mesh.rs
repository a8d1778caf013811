use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{InterfaceGraph, LayeredPartition, Point3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetLabel {
    Sigma,
    Other,
}

impl FacetLabel {
    fn as_str(self) -> &'static str {
        match self {
            FacetLabel::Sigma => "SIGMA",
            FacetLabel::Other => "OTHER",
        }
    }
}

/// Node coordinates of a tensor-product box grid, one sorted list per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAxes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl BoxAxes {
    pub fn uniform_cube(resolution: usize) -> Self {
        let a = uniform_axis(0.0, 1.0, resolution);
        Self { x: a.clone(), y: a.clone(), z: a }
    }

    fn axis(&self, d: usize) -> &[f64] {
        match d {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    fn cells(&self) -> [usize; 3] {
        [self.x.len() - 1, self.y.len() - 1, self.z.len() - 1]
    }

    fn validate(&self) -> Result<()> {
        for d in 0..3 {
            let a = self.axis(d);
            if a.len() < 2 || a.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidArgument(format!("axis {d} must be strictly increasing with ≥ 2 nodes")));
            }
        }
        Ok(())
    }
}

pub fn uniform_axis(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| if i == cells { hi } else { lo + (hi - lo) * i as f64 / cells as f64 })
        .collect()
}

/// Axis with spacing `h_min` on `[focus − core, focus + core]` that grows
/// geometrically by `growth` towards both ends, capped at `h_max`. `focus`
/// is always a node.
pub fn graded_axis(lo: f64, hi: f64, focus: f64, h_min: f64, core: f64, growth: f64, h_max: f64) -> Vec<f64> {
    assert!(lo < focus && focus < hi && h_min > 0.0 && growth >= 1.0 && h_max >= h_min);
    let side = |extent: f64| -> Vec<f64> {
        // offsets from focus, increasing, last one == extent
        let mut out = Vec::new();
        let mut pos = 0.0;
        let mut step = h_min;
        loop {
            if pos + 1e-12 >= core {
                step = (step * growth).min(h_max);
            }
            let next = pos + step;
            if next >= extent - 1e-12 {
                if extent - pos < 0.5 * step && !out.is_empty() {
                    out.pop();
                }
                out.push(extent);
                break;
            }
            out.push(next);
            pos = next;
        }
        out
    };
    let mut axis: Vec<f64> = side(focus - lo).into_iter().rev().map(|d| focus - d).collect();
    axis.push(focus);
    axis.extend(side(hi - focus).into_iter().map(|d| focus + d));
    axis[0] = lo;
    *axis.last_mut().unwrap() = hi;
    axis
}

/// Labeled tetrahedral mesh of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    pub vertices: Vec<Point3>,
    pub elements: Vec<[usize; 4]>,
    /// Subdomain label per element (`0` is the augmentation block `D_0`).
    pub labels: Vec<usize>,
    pub facets: Vec<([usize; 3], FacetLabel)>,
    /// Largest element size, `diam / √3` (the cell side on a uniform grid).
    pub h: f64,
    axes: Option<BoxAxes>,
}

// Kuhn subdivision: each permutation of the axes is a monotone path from
// the low corner to the high corner of the cell.
const KUHN_PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Structured box mesh, each grid cell split into 6 Kuhn tetrahedra.
/// `label` receives the element barycenter. `Σ` is the top face.
pub fn gen_box_mesh(axes: &BoxAxes, label: impl Fn(&Point3) -> Result<usize>) -> Result<SimplicialMesh> {
    axes.validate()?;
    let [cx, cy, cz] = axes.cells();
    let (nx, ny) = (cx + 1, cy + 1);
    let vid = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut vertices = Vec::with_capacity(nx * ny * (cz + 1));
    for k in 0..=cz {
        for j in 0..=cy {
            for i in 0..=cx {
                vertices.push(Point3::new(axes.x[i], axes.y[j], axes.z[k]));
            }
        }
    }
    let mut elements = Vec::with_capacity(6 * cx * cy * cz);
    let mut labels = Vec::with_capacity(6 * cx * cy * cz);
    let mut h: f64 = 0.0;
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                for perm in KUHN_PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [vid(c[0], c[1], c[2]); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = vid(c[0], c[1], c[2]);
                    }
                    let mut vol = signed_volume(&vertices, &tet);
                    if vol < 0.0 {
                        tet.swap(2, 3);
                        vol = -vol;
                    }
                    if !(vol > 0.0) {
                        return Err(Error::DegenerateElement { element: elements.len(), volume: vol });
                    }
                    let bc = barycenter_of(&vertices, &tet);
                    labels.push(label(&bc)?);
                    h = h.max(element_size(&vertices, &tet));
                    elements.push(tet);
                }
            }
        }
    }
    let mut facets = Vec::new();
    // faces normal to each axis; low side then high side
    for d in 0..3 {
        let (a, b) = match d {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let cells = [cx, cy, cz];
        for side in [0, cells[d]] {
            let lab = if d == 2 && side == cz { FacetLabel::Sigma } else { FacetLabel::Other };
            for q in 0..cells[b] {
                for p in 0..cells[a] {
                    let corner = |dp: usize, dq: usize| {
                        let mut c = [0usize; 3];
                        c[d] = side;
                        c[a] = p + dp;
                        c[b] = q + dq;
                        vid(c[0], c[1], c[2])
                    };
                    facets.push(([corner(0, 0), corner(1, 0), corner(1, 1)], lab));
                    facets.push(([corner(0, 0), corner(0, 1), corner(1, 1)], lab));
                }
            }
        }
    }
    Ok(SimplicialMesh { vertices, elements, labels, facets, h, axes: Some(axes.clone()) })
}

/// Mesh of `[0,1]^3` with `resolution` cells per axis, elements labeled by
/// the layer containing their barycenter.
pub fn gen_layered_box_mesh(n_layers: usize, interfaces: &[InterfaceGraph], resolution: usize) -> Result<SimplicialMesh> {
    if n_layers == 0 {
        return Err(Error::InvalidArgument("need at least one subdomain".into()));
    }
    if interfaces.len() + 1 != n_layers {
        return Err(Error::InvalidArgument(format!(
            "{n_layers} layers need {} interfaces, got {}",
            n_layers - 1,
            interfaces.len()
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    let partition = LayeredPartition::new(interfaces.to_vec())?;
    gen_layered_mesh_on(&BoxAxes::uniform_cube(resolution), &partition, None)
}

/// Layered mesh on arbitrary axes. Elements above `x_3 = 1` are labeled `0`
/// when `d0_top` is given (the augmentation block).
pub fn gen_layered_mesh_on(axes: &BoxAxes, partition: &LayeredPartition, d0_top: Option<f64>) -> Result<SimplicialMesh> {
    gen_box_mesh(axes, |b| {
        if let Some(top) = d0_top {
            if b[2] > 1.0 && b[2] <= top {
                return Ok(0);
            }
        }
        partition.label_of(b).ok_or(Error::OutsideDomain { point: [b[0], b[1], b[2]] })
    })
}

fn signed_volume(v: &[Point3], t: &[usize; 4]) -> f64 {
    let m = Matrix3::from_columns(&[v[t[1]] - v[t[0]], v[t[2]] - v[t[0]], v[t[3]] - v[t[0]]]);
    m.determinant() / 6.0
}

fn barycenter_of(v: &[Point3], t: &[usize; 4]) -> Point3 {
    (v[t[0]] + v[t[1]] + v[t[2]] + v[t[3]]) / 4.0
}

fn element_size(v: &[Point3], t: &[usize; 4]) -> f64 {
    let mut diam: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            diam = diam.max((v[t[a]] - v[t[b]]).norm());
        }
    }
    diam / 3f64.sqrt()
}

impl SimplicialMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn signed_volume(&self, e: usize) -> f64 {
        signed_volume(&self.vertices, &self.elements[e])
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.signed_volume(e).abs()
    }

    pub fn barycenter(&self, e: usize) -> Point3 {
        barycenter_of(&self.vertices, &self.elements[e])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.signed_volume(e)).sum()
    }

    pub fn element_size(&self, e: usize) -> f64 {
        element_size(&self.vertices, &self.elements[e])
    }

    pub fn axes(&self) -> Option<&BoxAxes> {
        self.axes.as_ref()
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Mesh size near `y`: the cell spacing there on structured meshes, the
    /// global `h` otherwise.
    pub fn local_size(&self, y: &Point3) -> f64 {
        match &self.axes {
            Some(axes) => (0..3)
                .map(|d| {
                    let a = axes.axis(d);
                    let c = locate_interval(a, y[d]);
                    let mut s = a[c + 1] - a[c];
                    if c > 0 {
                        s = s.max(a[c] - a[c - 1]);
                    }
                    if c + 2 < a.len() {
                        s = s.max(a[c + 2] - a[c + 1]);
                    }
                    s
                })
                .fold(0.0, f64::max),
            None => self.h,
        }
    }

    /// Distance from `y` to the boundary of the mesh's bounding box.
    pub fn distance_to_boundary(&self, y: &Point3) -> f64 {
        let (lo, hi) = self.bounding_box();
        (0..3).map(|d| (y[d] - lo[d]).min(hi[d] - y[d])).fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut on = vec![false; self.n_vertices()];
        for (f, _) in &self.facets {
            for &v in f {
                on[v] = true;
            }
        }
        on
    }

    /// Nodes strictly interior to `Σ`: on a `Σ` facet and on no other facet.
    pub fn sigma_nodes(&self) -> Vec<usize> {
        let mut sigma = vec![false; self.n_vertices()];
        let mut other = vec![false; self.n_vertices()];
        for (f, lab) in &self.facets {
            for &v in f {
                match lab {
                    FacetLabel::Sigma => sigma[v] = true,
                    FacetLabel::Other => other[v] = true,
                }
            }
        }
        (0..self.n_vertices()).filter(|&v| sigma[v] && !other[v]).collect()
    }

    /// Checks the structural invariants: positive volumes, labels present,
    /// every facet edge shared by exactly two facets (closed surface) and a
    /// nonempty `Σ`.
    pub fn validate(&self) -> Result<()> {
        for e in 0..self.n_elements() {
            let v = self.signed_volume(e);
            if !(v > 0.0) {
                return Err(Error::DegenerateElement { element: e, volume: v });
            }
        }
        if self.labels.len() != self.elements.len() {
            return Err(Error::InvalidArgument("one label per element required".into()));
        }
        let mut edges = std::collections::HashMap::new();
        for (f, _) in &self.facets {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        if edges.values().any(|&c| c != 2) {
            return Err(Error::InvalidArgument("boundary facets do not form a closed surface".into()));
        }
        if !self.facets.iter().any(|(_, l)| *l == FacetLabel::Sigma) {
            return Err(Error::InvalidArgument("Σ is empty".into()));
        }
        Ok(())
    }

    /// Text format: header `3 nv ne nf`, then vertices, elements (`a b c d
    /// label`), facets (`a b c SIGMA|OTHER`); reals with 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "3 {} {} {}", self.n_vertices(), self.n_elements(), self.facets.len())?;
        let mut line = String::new();
        for v in &self.vertices {
            line.clear();
            write!(line, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]).unwrap();
            writeln!(w, "{line}")?;
        }
        for (t, l) in self.elements.iter().zip(&self.labels) {
            writeln!(w, "{} {} {} {} {}", t[0], t[1], t[2], t[3], l)?;
        }
        for (f, l) in &self.facets {
            writeln!(w, "{} {} {} {}", f[0], f[1], f[2], l.as_str())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::Parse { line: 0, msg: format!("unexpected end of input reading {what}") }),
            }
        };
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let (ln, header) = next("header")?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(ln, "bad header")))
            .collect::<Result<_>>()?;
        if head.len() != 4 || head[0] != 3 {
            return Err(perr(ln, "header must be `3 nv ne nf`"));
        }
        let (nv, ne, nf) = (head[1], head[2], head[3]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("vertex")?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad coordinate")))
                .collect::<Result<_>>()?;
            if c.len() != 3 {
                return Err(perr(ln, "vertex needs 3 coordinates"));
            }
            vertices.push(Point3::new(c[0], c[1], c[2]));
        }
        let mut elements = Vec::with_capacity(ne);
        let mut labels = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = next("element")?;
            let c: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad element index")))
                .collect::<Result<_>>()?;
            if c.len() != 5 || c[..4].iter().any(|&i| i >= nv) {
                return Err(perr(ln, "element needs 4 valid indices and a label"));
            }
            elements.push([c[0], c[1], c[2], c[3]]);
            labels.push(c[4]);
        }
        let mut facets = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (ln, l) = next("facet")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(perr(ln, "facet needs 3 indices and a label"));
            }
            let mut f = [0usize; 3];
            for (k, t) in toks[..3].iter().enumerate() {
                f[k] = t.parse().map_err(|_| perr(ln, "bad facet index"))?;
                if f[k] >= nv {
                    return Err(perr(ln, "facet index out of range"));
                }
            }
            let lab = match toks[3] {
                "SIGMA" => FacetLabel::Sigma,
                "OTHER" => FacetLabel::Other,
                _ => return Err(perr(ln, "facet label must be SIGMA or OTHER")),
            };
            facets.push((f, lab));
        }
        let h = elements.iter().map(|t| element_size(&vertices, t)).fold(0.0, f64::max);
        Ok(Self { vertices, elements, labels, facets, h, axes: None })
    }

    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

fn locate_interval(a: &[f64], x: f64) -> usize {
    let n = a.len() - 1;
    match a.partition_point(|&v| v <= x) {
        0 => 0,
        p if p > n => n - 1,
        p => (p - 1).min(n - 1),
    }
}

/// Finds the element containing a point and its barycentric coordinates.
pub struct PointLocator<'m> {
    mesh: &'m SimplicialMesh,
    buckets: Option<(Point3, Point3, [usize; 3], Vec<Vec<usize>>)>,
}

impl<'m> PointLocator<'m> {
    fn new(mesh: &'m SimplicialMesh) -> Self {
        if mesh.axes.is_some() {
            return Self { mesh, buckets: None };
        }
        let (lo, hi) = mesh.bounding_box();
        let per_axis = ((mesh.n_elements() as f64 / 8.0).cbrt().ceil() as usize).max(1);
        let dims = [per_axis; 3];
        let mut buckets = vec![Vec::new(); per_axis * per_axis * per_axis];
        let cell = |x: f64, d: usize| -> usize {
            let t = ((x - lo[d]) / (hi[d] - lo[d]) * per_axis as f64).floor();
            (t.max(0.0) as usize).min(per_axis - 1)
        };
        for (e, t) in mesh.elements.iter().enumerate() {
            let mut blo = [usize::MAX; 3];
            let mut bhi = [0usize; 3];
            for &v in t {
                for d in 0..3 {
                    let c = cell(mesh.vertices[v][d], d);
                    blo[d] = blo[d].min(c);
                    bhi[d] = bhi[d].max(c);
                }
            }
            for k in blo[2]..=bhi[2] {
                for j in blo[1]..=bhi[1] {
                    for i in blo[0]..=bhi[0] {
                        buckets[i + per_axis * (j + per_axis * k)].push(e);
                    }
                }
            }
        }
        Self { mesh, buckets: Some((lo, hi, dims, buckets)) }
    }

    pub fn barycentric(&self, e: usize, x: &Point3) -> [f64; 4] {
        let v = &self.mesh.vertices;
        let t = &self.mesh.elements[e];
        let m = Matrix3::from_columns(&[v[t[1]] - v[t[0]], v[t[2]] - v[t[0]], v[t[3]] - v[t[0]]]);
        let l = m.lu().solve(&(x - v[t[0]])).unwrap_or_else(|| Point3::repeat(f64::NAN));
        [1.0 - l[0] - l[1] - l[2], l[0], l[1], l[2]]
    }

    fn best_of(&self, candidates: impl Iterator<Item = usize>, x: &Point3) -> Option<(usize, [f64; 4])> {
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for e in candidates {
            let b = self.barycentric(e, x);
            let worst = b.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-10 {
                return Some((e, b));
            }
            if best.as_ref().map_or(true, |bb| worst > bb.2) {
                best = Some((e, b, worst));
            }
        }
        best.filter(|b| b.2 > -1e-6).map(|b| (b.0, b.1))
    }

    /// Element containing `x` with barycentric weights, or `None` outside.
    pub fn locate(&self, x: &Point3) -> Option<(usize, [f64; 4])> {
        match (&self.mesh.axes, &self.buckets) {
            (Some(axes), _) => {
                let c = [
                    locate_interval(&axes.x, x[0]),
                    locate_interval(&axes.y, x[1]),
                    locate_interval(&axes.z, x[2]),
                ];
                for d in 0..3 {
                    let a = axes.axis(d);
                    if x[d] < a[0] - 1e-12 || x[d] > a[a.len() - 1] + 1e-12 {
                        return None;
                    }
                }
                let [cx, cy, _] = axes.cells();
                let cell = c[0] + cx * (c[1] + cy * c[2]);
                self.best_of(6 * cell..6 * cell + 6, x)
            }
            (None, Some((lo, hi, dims, buckets))) => {
                let mut idx = [0usize; 3];
                for d in 0..3 {
                    if x[d] < lo[d] - 1e-12 || x[d] > hi[d] + 1e-12 {
                        return None;
                    }
                    let t = ((x[d] - lo[d]) / (hi[d] - lo[d]) * dims[d] as f64).floor();
                    idx[d] = (t.max(0.0) as usize).min(dims[d] - 1);
                }
                let b = &buckets[idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])];
                self.best_of(b.iter().copied(), x)
            }
            _ => None,
        }
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: &Point3) -> Option<f64> {
        let (e, b) = self.locate(x)?;
        let t = &self.mesh.elements[e];
        Some((0..4).map(|a| b[a] * values[t[a]]).sum())
    }
}
