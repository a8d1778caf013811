//! Domains, layered partitions, structured tetrahedral meshes and the
//! flattening diffeomorphism that straightens a graph interface.
//!
//! Lengths are dimensionless. The physical domain is the box `[0,1]^3`,
//! `Σ` is its top face, and subdomains are horizontal layers separated by
//! graphs `x_3 = h_k(x')`.

mod flatten;
mod graph;
mod mesh;
mod partition;

pub use flatten::{tau, tau_prime, FlatteningMap};
pub use graph::{GraphProfile, InterfaceGraph, RegularityReport};
pub use mesh::{
    gen_box_mesh, gen_layered_box_mesh, gen_layered_mesh_on, graded_axis, uniform_axis, BoxAxes,
    FacetLabel, PointLocator, SimplicialMesh,
};
pub use partition::{AprioriData, D0Geometry, LayeredPartition, PartitionChain};

use nalgebra::SVector;

pub type Point<const N: usize> = SVector<f64, N>;
pub type Point3 = nalgebra::Vector3<f64>;

/// `Q_r(x) = B'_r(x') × (x_n − r, x_n + r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder<const N: usize> {
    pub center: Point<N>,
    pub radius: f64,
}

impl<const N: usize> Cylinder<N> {
    pub fn new(center: Point<N>, radius: f64) -> crate::Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(crate::Error::InvalidArgument(format!(
                "cylinder radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &Point<N>) -> bool {
        let tangential: f64 = (0..N - 1)
            .map(|i| (x[i] - self.center[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        tangential < self.radius && (x[N - 1] - self.center[N - 1]).abs() < self.radius
    }
}

/// `ξ* = (ξ', −ξ_n)`.
pub fn mirror<const N: usize>(x: &Point<N>) -> Point<N> {
    let mut m = *x;
    m[N - 1] = -m[N - 1];
    m
}

/// Euclidean norm of the tangential part `x'`.
pub(crate) fn tangential_norm<const N: usize>(x: &Point<N>) -> f64 {
    (0..N - 1).map(|i| x[i] * x[i]).sum::<f64>().sqrt()
}
