use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Artifact, Check, ExperimentConfig, Summary, Table};
use crate::geometry::{gen_layered_mesh_on, uniform_axis, BoxAxes, SimplicialMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MeshGenParams {
    /// Thickness of the augmentation block above the top face; none when
    /// absent.
    pub d0_thickness: Option<f64>,
}

/// Unit-cube axes with `resolution` cells per unit, the `z` axis extended
/// to `1 + t` at the same spacing.
pub fn augmented_axes(resolution: usize, t: Option<f64>) -> Result<BoxAxes> {
    let mut axes = BoxAxes::uniform_cube(resolution);
    if let Some(t) = t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("d0 thickness must be positive, got {t}")));
        }
        let cells = ((t * resolution as f64).round() as usize).max(1);
        axes.z.extend(uniform_axis(1.0, 1.0 + t, cells).into_iter().skip(1));
    }
    Ok(axes)
}

pub(super) fn build(cfg: &ExperimentConfig) -> Result<SimplicialMesh> {
    let p: MeshGenParams = cfg.params()?;
    let partition = cfg.partition.build()?;
    let axes = augmented_axes(cfg.resolution, p.d0_thickness)?;
    gen_layered_mesh_on(&axes, &partition, p.d0_thickness.map(|t| 1.0 + t))
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let mesh = build(cfg)?;
    let valid = mesh.validate().is_ok();
    let mut per: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for e in 0..mesh.n_elements() {
        let slot = per.entry(mesh.labels[e]).or_default();
        slot.0 += 1;
        slot.1 += mesh.volume(e);
    }
    let mut t = Table::new(&["label", "elements", "volume", "vertices", "h", "valid"]);
    for (label, (n, v)) in per {
        t.push(vec![label.into(), n.into(), v.into(), mesh.n_vertices().into(), mesh.h.into(), valid.into()]);
    }
    let mut bytes = Vec::new();
    mesh.write_text(&mut bytes)?;
    Ok((t, vec![Artifact { name: "mesh.txt".into(), bytes }]))
}

pub(super) fn summarize(cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let p: MeshGenParams = cfg.params()?;
    let mut s = Summary::new("mesh-gen", t.len());
    let mut total = 0.0;
    let mut elements = 0.0;
    let mut valid = true;
    for r in 0..t.len() {
        total += t.num(r, "volume")?;
        elements += t.num(r, "elements")?;
        valid &= t.text(r, "valid")? == "true";
    }
    let expected = 1.0 + p.d0_thickness.unwrap_or(0.0);
    s.stat("elements", elements);
    s.stat("total_volume", total);
    if t.len() > 0 {
        s.stat("vertices", t.num(0, "vertices")?);
        s.stat("h", t.num(0, "h")?);
    }
    s.check(Check::holds("mesh_valid", valid));
    s.check(Check::at_most("volume_defect", (total - expected).abs() / expected, cfg.tol("volume_defect", 1e-12)));
    let labels = cfg.partition.interfaces.len() + 1 + usize::from(p.d0_thickness.is_some());
    s.check(Check::holds("every_label_present", t.len() == labels));
    Ok(s)
}
