use serde::{Deserialize, Serialize};

use super::{InterfaceGraph, Point3};
use crate::{Error, Result};

const CROSSING_GRID: usize = 65;
const BOX_EPS: f64 = 1e-12;

/// Partition of the unit box into `N = interfaces.len() + 1` horizontal
/// layers. Layer 1 is the bottom one; layer `N` touches `Σ` (the top face).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredPartition {
    pub interfaces: Vec<InterfaceGraph>,
}

impl LayeredPartition {
    /// Validates ordering: every interface stays strictly inside `(0,1)` and
    /// strictly below the next one on a 65×65 sampling of the top face.
    pub fn new(interfaces: Vec<InterfaceGraph>) -> Result<Self> {
        let n = CROSSING_GRID;
        for i in 0..n {
            for j in 0..n {
                let x1 = i as f64 / (n - 1) as f64;
                let x2 = j as f64 / (n - 1) as f64;
                for (k, g) in interfaces.iter().enumerate() {
                    let h = g.height(x1, x2);
                    if !(h > 0.0 && h < 1.0) {
                        return Err(Error::InvalidArgument(format!(
                            "interface {k} leaves the box at x' = ({x1}, {x2}) (height {h})"
                        )));
                    }
                }
                for k in 1..interfaces.len() {
                    if interfaces[k - 1].height(x1, x2) >= interfaces[k].height(x1, x2) {
                        return Err(Error::CrossingInterfaces { lower: k - 1, upper: k, x1, x2 });
                    }
                }
            }
        }
        Ok(Self { interfaces })
    }

    pub fn single() -> Self {
        Self { interfaces: Vec::new() }
    }

    /// Two layers split by the flat plane `x_3 = z`.
    pub fn two_layer_flat(z: f64) -> Result<Self> {
        Self::new(vec![InterfaceGraph::flat(z)])
    }

    pub fn n_subdomains(&self) -> usize {
        self.interfaces.len() + 1
    }

    /// Layer index (1-based) of a point of the unit box, counting interfaces
    /// strictly below it. Points outside the closed box get `None`.
    pub fn label_of(&self, x: &Point3) -> Option<usize> {
        if (0..3).any(|i| x[i] < -BOX_EPS || x[i] > 1.0 + BOX_EPS) {
            return None;
        }
        Some(1 + self.interfaces.iter().filter(|g| g.height(x[0], x[1]) < x[2]).count())
    }
}

/// Augmentation block `D_0` glued to `Ω` along `Σ`: a box standing on the
/// whole top face, `[0,1]² × [z_lo, z_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D0Geometry {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl D0Geometry {
    pub fn pad(thickness: f64) -> Self {
        Self { lo: [0.0, 0.0, 1.0], hi: [1.0, 1.0, 1.0 + thickness] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo[2] < 1.0 - BOX_EPS {
            return Err(Error::Overlap);
        }
        if (self.lo[2] - 1.0).abs() > BOX_EPS
            || self.lo[0].abs() > BOX_EPS
            || self.lo[1].abs() > BOX_EPS
            || (self.hi[0] - 1.0).abs() > BOX_EPS
            || (self.hi[1] - 1.0).abs() > BOX_EPS
        {
            return Err(Error::InvalidArgument("D0 must stand on the whole top face Σ".into()));
        }
        if self.hi[2] <= self.lo[2] {
            return Err(Error::InvalidArgument("D0 must have positive thickness".into()));
        }
        Ok(())
    }

    pub fn thickness(&self) -> f64 {
        self.hi[2] - self.lo[2]
    }

    pub fn contains(&self, x: &Point3) -> bool {
        x[0] >= self.lo[0] - BOX_EPS
            && x[0] <= self.hi[0] + BOX_EPS
            && x[1] >= self.lo[1] - BOX_EPS
            && x[1] <= self.hi[1] + BOX_EPS
            && x[2] > self.lo[2]
            && x[2] <= self.hi[2] + BOX_EPS
    }

    /// `dist(x, Ω)` for points of `D_0`.
    pub fn distance_to_omega(&self, x: &Point3) -> f64 {
        (x[2] - self.lo[2]).max(0.0)
    }
}

/// The a-priori data `(N, r0, L, M, α, λ, γ̄, Ā)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriData {
    pub n_subdomains: usize,
    pub r0: f64,
    pub lipschitz_l: f64,
    pub m: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma_bar: f64,
    pub a_bar: f64,
}

impl AprioriData {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.r0, self.lipschitz_l, self.m, self.lambda, self.gamma_bar, self.a_bar];
        if self.n_subdomains == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("a-priori constants must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0,1]".into()));
        }
        if self.lambda < 1.0 || self.gamma_bar > 1.0 {
            return Err(Error::InvalidArgument("need lambda ≥ 1 and gamma_bar ≤ 1".into()));
        }
        Ok(())
    }
}

/// Chain of subdomains leading from the one touching `Σ` to a target
/// subdomain, with anchor points on the shared interfaces.
///
/// `chain[0]` touches `Σ`; `anchors[0]` lies on `Σ` and `anchors[k]`
/// (k ≥ 1) lies on the interface between `chain[k-1]` and `chain[k]`.
/// `normals[k]` is the unit normal at `anchors[k]` pointing out of
/// `chain[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionChain {
    pub n_subdomains: usize,
    pub chain: Vec<usize>,
    pub anchors: Vec<Point3>,
    pub normals: Vec<Point3>,
    pub graphs: Vec<InterfaceGraph>,
    pub apriori: AprioriData,
}

impl PartitionChain {
    /// Chain through the layers from the top layer down to `target`.
    pub fn layered(partition: &LayeredPartition, target: usize, apriori: AprioriData) -> Result<Self> {
        apriori.validate()?;
        let n = partition.n_subdomains();
        if apriori.n_subdomains != n {
            return Err(Error::PartitionMismatch(format!(
                "a-priori N = {} but the partition has {n} layers",
                apriori.n_subdomains
            )));
        }
        if target == 0 || target > n {
            return Err(Error::InvalidArgument(format!("target layer {target} out of 1..={n}")));
        }
        let chain: Vec<usize> = (target..=n).rev().collect();
        let mut anchors = vec![Point3::new(0.5, 0.5, 1.0)];
        let mut normals = vec![Point3::new(0.0, 0.0, 1.0)];
        let mut graphs = Vec::new();
        for &layer in &chain[1..] {
            // interface between `layer` and `layer + 1` is interfaces[layer - 1]
            let g = partition.interfaces[layer - 1].clone();
            anchors.push(g.anchor_point());
            normals.push(g.upward_normal(g.anchor[0], g.anchor[1]));
            graphs.push(g);
        }
        let out = Self { n_subdomains: n, chain, anchors, normals, graphs, apriori };
        out.validate()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain.is_empty() || self.anchors.len() != self.chain.len() || self.normals.len() != self.chain.len() {
            return Err(Error::InvalidArgument("chain, anchors and normals must have equal nonzero length".into()));
        }
        if self.chain.iter().any(|&j| j == 0 || j > self.n_subdomains) {
            return Err(Error::InvalidArgument("chain index out of range".into()));
        }
        for w in self.chain.windows(2) {
            if w[0].abs_diff(w[1]) != 1 {
                return Err(Error::InvalidArgument(format!(
                    "layers {} and {} do not share an interface",
                    w[0], w[1]
                )));
            }
        }
        for nu in &self.normals {
            if (nu.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("anchor normals must be unit vectors".into()));
            }
        }
        self.apriori.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GraphProfile;

    fn apriori(n: usize) -> AprioriData {
        AprioriData {
            n_subdomains: n,
            r0: 0.25,
            lipschitz_l: 1.0,
            m: 1.0,
            alpha: 1.0,
            lambda: 2.0,
            gamma_bar: 0.2,
            a_bar: 1.0,
        }
    }

    #[test]
    fn crossing_interfaces_are_rejected_with_pair() {
        let lower = InterfaceGraph::flat(0.5);
        let upper = InterfaceGraph::new(
            GraphProfile::Quadratic { c1: -0.5, c2: 0.0 },
            [0.0, 0.5, 0.6],
            0.5,
            10.0,
            1.0,
        )
        .unwrap();
        match LayeredPartition::new(vec![lower, upper]) {
            Err(Error::CrossingInterfaces { lower: 0, upper: 1, .. }) => {}
            other => panic!("expected crossing error, got {other:?}"),
        }
    }

    #[test]
    fn labels_count_interfaces_below() {
        let p = LayeredPartition::new(vec![InterfaceGraph::flat(0.3), InterfaceGraph::flat(0.7)]).unwrap();
        assert_eq!(p.label_of(&Point3::new(0.5, 0.5, 0.1)), Some(1));
        assert_eq!(p.label_of(&Point3::new(0.5, 0.5, 0.5)), Some(2));
        assert_eq!(p.label_of(&Point3::new(0.5, 0.5, 0.9)), Some(3));
        assert_eq!(p.label_of(&Point3::new(0.5, 0.5, 1.5)), None);
    }

    #[test]
    fn layered_chain_runs_from_sigma_down() {
        let p = LayeredPartition::new(vec![InterfaceGraph::flat(0.3), InterfaceGraph::flat(0.7)]).unwrap();
        let c = PartitionChain::layered(&p, 1, apriori(3)).unwrap();
        assert_eq!(c.chain, vec![3, 2, 1]);
        assert_eq!(c.anchors[1], Point3::new(0.5, 0.5, 0.7));
        assert_eq!(c.anchors[2], Point3::new(0.5, 0.5, 0.3));
        assert!(PartitionChain::layered(&p, 1, apriori(2)).is_err());
    }

    #[test]
    fn d0_overlap_rejected() {
        assert!(D0Geometry::pad(0.3).validate().is_ok());
        let bad = D0Geometry { lo: [0.0, 0.0, 0.9], hi: [1.0, 1.0, 1.2] };
        assert!(matches!(bad.validate(), Err(Error::Overlap)));
    }
}
