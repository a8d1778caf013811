use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{linear_fit, loglog_fit, middle_window, Artifact, Cell, Check, ExperimentConfig, Summary, Table};
use crate::conductivity::{ClassCConductivity, MatrixField};
use crate::fem::{assemble, solve_green_on, AssembledSystem, GreenApprox, GreenMethod, GreenOptions, SolverDiagnostics};
use crate::geometry::{gen_layered_mesh_on, graded_axis, BoxAxes, LayeredPartition, Point3, SimplicialMesh};
use crate::kernels::AnisoTwoPhaseKernel;
use crate::{Error, Result};

/// One medium of the ladder study: two conductivity values and a constant
/// matrix `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticCase {
    pub name: String,
    pub gamma: [f64; 2],
    /// Constant `A`; identity when absent.
    #[serde(default)]
    pub a: Option<[[f64; 3]; 3]>,
}

impl AsymptoticCase {
    fn matrix(&self) -> Matrix3<f64> {
        self.a.map_or_else(Matrix3::identity, |m| Matrix3::from_fn(|i, j| m[i][j]))
    }

    /// `2/(γ_below + γ_above)`.
    pub fn coefficient(&self) -> f64 {
        2.0 / (self.gamma[0] + self.gamma[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsParams {
    pub cases: Vec<AsymptoticCase>,
    /// Interface point the ladder approaches.
    pub point: [f64; 2],
    pub r_start: f64,
    pub ladder: usize,
    /// Mesh spacing at the focus, width of the fine core and growth rate;
    /// the coarse spacing is `1/resolution`.
    pub h_min: f64,
    pub core: f64,
    pub growth: f64,
    pub cutoff_radius: Option<f64>,
    /// Points nearest the interface used for the extrapolation.
    pub extrapolation_points: usize,
    pub mollified_check: bool,
    pub write_fields: bool,
}

impl Default for AsymptoticsParams {
    fn default() -> Self {
        Self {
            cases: vec![
                AsymptoticCase { name: "isotropic".into(), gamma: [1.0, 3.0], a: None },
                AsymptoticCase {
                    name: "anisotropic".into(),
                    gamma: [1.0, 3.0],
                    a: Some([[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
                },
                AsymptoticCase { name: "homogeneous".into(), gamma: [1.0, 1.0], a: None },
            ],
            point: [0.5, 0.5],
            r_start: 0.006,
            ladder: 5,
            h_min: 0.0026,
            core: 0.01,
            growth: 1.25,
            cutoff_radius: None,
            extrapolation_points: 3,
            mollified_check: true,
            write_fields: false,
        }
    }
}

const COLUMNS: [&str; 10] = ["case", "kind", "j", "r", "dist", "g", "pred", "ratio", "residual", "coefficient"];

fn partition_of(cfg: &ExperimentConfig) -> Result<LayeredPartition> {
    let p = cfg.partition.build()?;
    if p.n_subdomains() != 2 || !p.interfaces[0].profile.is_flat() {
        return Err(Error::Config("asymptotics needs a two-layer partition with a flat interface".into()));
    }
    Ok(p)
}

fn graded_mesh(cfg: &ExperimentConfig, p: &AsymptoticsParams, focus: &Point3, partition: &LayeredPartition) -> Result<SimplicialMesh> {
    let h_max = 1.0 / cfg.resolution as f64;
    if !(p.h_min > 0.0 && p.h_min <= h_max && p.growth >= 1.0 && p.core >= 0.0) {
        return Err(Error::Config("need 0 < h_min ≤ 1/resolution, growth ≥ 1 and core ≥ 0".into()));
    }
    if (0..3).any(|i| !(focus[i] > 0.0 && focus[i] < 1.0)) {
        return Err(Error::Config("ladder point must lie inside the unit cube".into()));
    }
    let ax = |c: f64| graded_axis(0.0, 1.0, c, p.h_min, p.core, p.growth, h_max);
    let axes = BoxAxes { x: ax(focus[0]), y: ax(focus[1]), z: ax(focus[2]) };
    gen_layered_mesh_on(&axes, partition, None)
}

struct Rung {
    r: f64,
    xbar: Point3,
    ybar: Point3,
}

fn ladder(p: &AsymptoticsParams, focus: &Point3) -> Vec<Rung> {
    (0..p.ladder)
        .map(|j| {
            let r = p.r_start * 2f64.powi(j as i32);
            Rung { r, xbar: focus - Point3::new(0.0, 0.0, r), ybar: focus + Point3::new(0.0, 0.0, r) }
        })
        .collect()
}

fn feasibility(mesh: &SimplicialMesh, p: &AsymptoticsParams, rungs: &[Rung]) -> Result<()> {
    let ok: Vec<bool> = rungs
        .iter()
        .map(|g| 2.0 * g.r >= 4.0 * mesh.local_size(&g.ybar) && mesh.distance_to_boundary(&g.ybar) >= 2.0 * mesh.local_size(&g.ybar))
        .collect();
    if ok.iter().all(|b| *b) {
        return Ok(());
    }
    let feasible: Vec<String> = rungs.iter().zip(&ok).filter(|(_, b)| **b).map(|(g, _)| format!("{}", g.r)).collect();
    Err(Error::Config(format!(
        "mesh too coarse for the ladder starting at r = {} (h_min {}); feasible r: [{}]",
        p.r_start,
        p.h_min,
        feasible.join(", ")
    )))
}

fn gamma_bar(gamma: &[f64]) -> f64 {
    gamma.iter().map(|g| g.min(1.0 / g)).fold(1.0, f64::min)
}

struct CaseRun<'a> {
    mesh: &'a SimplicialMesh,
    cond: ClassCConductivity,
    sys: AssembledSystem,
    kernel: AnisoTwoPhaseKernel<3>,
    height: f64,
}

impl CaseRun<'_> {
    fn frame(&self, x: &Point3) -> Point3 {
        Point3::new(x[0], x[1], x[2] - self.height)
    }

    /// Leading term `(2/(γ_l+γ_u)) det J Γ(J x̄, J ȳ)` and its gradient.
    fn predicted(&self, x: &Point3, y: &Point3, gamma_below: f64) -> Result<(f64, Point3)> {
        let (xf, yf) = (self.frame(x), self.frame(y));
        let v = self.kernel.mid_branch_closed_form(&xf, &yf)? / gamma_below;
        let g = self.kernel.grad(&xf, &yf, None)? / gamma_below;
        Ok((v, g))
    }

    fn green(&self, y: &Point3, opts: &GreenOptions) -> Result<GreenApprox> {
        solve_green_on(self.mesh, &self.sys, &self.cond, y, opts)
    }

    fn gradient_at(&self, g: &GreenApprox, x: &Point3) -> Result<Point3> {
        let (e, _) = self.mesh.locator().locate(x).ok_or(Error::OutsideDomain { point: [x[0], x[1], x[2]] })?;
        g.grad_in(self.mesh, &self.sys, e, x)
    }
}

#[allow(clippy::too_many_arguments)]
fn push(t: &mut Table, case: &str, kind: &str, j: usize, r: f64, dist: f64, g: f64, pred: f64, residual: f64, coef: f64) {
    t.push(vec![
        case.into(),
        kind.into(),
        j.into(),
        r.into(),
        dist.into(),
        g.into(),
        pred.into(),
        (g / pred).into(),
        residual.into(),
        Cell::from(coef),
    ]);
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let p: AsymptoticsParams = cfg.params()?;
    if p.cases.is_empty() || p.ladder < 3 || !(p.r_start > 0.0) || p.extrapolation_points < 2 || p.extrapolation_points > p.ladder {
        return Err(Error::Config("asymptotics needs cases, ladder ≥ 3, r_start > 0 and 2 ≤ extrapolation_points ≤ ladder".into()));
    }
    let partition = partition_of(cfg)?;
    let iface = &partition.interfaces[0];
    let height = iface.height(p.point[0], p.point[1]);
    let focus = Point3::new(p.point[0], p.point[1], height);
    let mesh = graded_mesh(cfg, &p, &focus, &partition)?;
    let rungs = ladder(&p, &focus);
    feasibility(&mesh, &p, &rungs)?;
    let split = GreenOptions { cutoff_radius: p.cutoff_radius, ..GreenOptions::with_method(GreenMethod::Split) };
    let moll = GreenOptions::with_method(GreenMethod::Mollified);

    let mut t = Table::new(&COLUMNS);
    let mut artifacts = Vec::new();
    for case in &p.cases {
        if case.gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config(format!("case `{}`: conductivities must be positive", case.name)));
        }
        let a = case.matrix();
        let cond = ClassCConductivity::new(case.gamma.to_vec(), gamma_bar(&case.gamma), MatrixField::constant(a), partition.clone())
            .map_err(|e| Error::Config(format!("case `{}`: {e}", case.name)))?;
        let sys = assemble(&mesh, &cond)?;
        let kernel = AnisoTwoPhaseKernel::new(&a, case.gamma[1] / case.gamma[0]).map_err(|e| Error::Config(format!("case `{}`: {e}", case.name)))?;
        let run = CaseRun { mesh: &mesh, cond, sys, kernel, height };
        let coef = case.coefficient();
        for (j, rung) in rungs.iter().enumerate() {
            let dist = (rung.xbar - rung.ybar).norm();
            let (pv, pg) = run.predicted(&rung.xbar, &rung.ybar, case.gamma[0])?;
            let g = run.green(&rung.ybar, &split)?;
            let gv = g.eval(&mesh, &rung.xbar)?;
            push(&mut t, &case.name, "value", j, rung.r, dist, gv, pv, (gv - pv).abs() * dist, coef);
            let gg = run.gradient_at(&g, &rung.xbar)?;
            push(&mut t, &case.name, "gradient", j, rung.r, dist, gg.norm(), pg.norm(), (gg - pg).norm() * dist * dist, coef);
            if p.mollified_check {
                let gm = run.green(&rung.ybar, &moll)?;
                let mv = gm.eval(&mesh, &rung.xbar)?;
                push(&mut t, &case.name, "mollified", j, rung.r, dist, mv, pv, (mv - pv).abs() * dist, coef);
            }
            if p.write_fields && j == 0 && artifacts.is_empty() {
                let mut csv = b"vertex_index,x1,x2,x3,value\n".to_vec();
                crate::fem::DiscreteField { values: g.nodal_values(&mesh)? }.write_csv(&mesh, &mut csv)?;
                artifacts.push(Artifact { name: format!("asymptotics.{}.field.csv", case.name), bytes: csv });
                let mut diag = serde_json::to_vec_pretty(&SolverDiagnostics::from(&g.info))?;
                diag.push(b'\n');
                artifacts.push(Artifact { name: "asymptotics.solver.json".into(), bytes: diag });
            }
        }
    }
    Ok((t, artifacts))
}

struct Series {
    dist: Vec<f64>,
    ratio: Vec<f64>,
    residual: Vec<f64>,
    coefficient: f64,
}

fn series(t: &Table, case: &str, kind: &str) -> Result<Series> {
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    for r in t.select("case", case)? {
        if t.text(r, "kind")? == kind {
            rows.push((t.num(r, "dist")?, t.num(r, "ratio")?, t.num(r, "residual")?, t.num(r, "coefficient")?));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Series {
        dist: rows.iter().map(|r| r.0).collect(),
        ratio: rows.iter().map(|r| r.1).collect(),
        residual: rows.iter().map(|r| r.2).collect(),
        coefficient: rows.first().map_or(f64::NAN, |r| r.3),
    })
}

/// Intercept at zero distance of the line through the nearest points.
fn extrapolate(s: &Series, k: usize) -> f64 {
    let k = k.min(s.dist.len());
    linear_fit(&s.dist[..k], &s.ratio[..k]).1
}

pub(super) fn summarize(cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let p: AsymptoticsParams = cfg.params()?;
    let mut s = Summary::new("asymptotics", t.len());
    let tol = cfg.tol("coefficient_relative", 0.1);
    let min_exp = cfg.tol("residual_exponent_min", 0.1);
    for case in &p.cases {
        let v = series(t, &case.name, "value")?;
        let ratio0 = extrapolate(&v, p.extrapolation_points);
        let recovered = v.coefficient * ratio0;
        s.stat(&format!("{}_recovered_coefficient", case.name), recovered);
        s.stat(&format!("{}_expected_coefficient", case.name), v.coefficient);
        s.check(Check::at_most(&format!("{}_coefficient", case.name), (recovered - v.coefficient).abs() / v.coefficient, tol));
        let exponent = loglog_fit(&middle_window(&v.dist), &middle_window(&v.residual)).0;
        s.stat(&format!("{}_residual_exponent", case.name), exponent);
        s.check(Check::at_least(&format!("{}_residual_exponent", case.name), exponent, min_exp));

        let g = series(t, &case.name, "gradient")?;
        if !g.dist.is_empty() {
            s.stat(&format!("{}_gradient_ratio0", case.name), extrapolate(&g, p.extrapolation_points));
            let ge = loglog_fit(&middle_window(&g.dist), &middle_window(&g.residual)).0;
            s.check(Check::at_least(&format!("{}_gradient_residual_exponent", case.name), ge, min_exp).report());
        }
        let m = series(t, &case.name, "mollified")?;
        if !m.dist.is_empty() {
            let r0 = extrapolate(&m, p.extrapolation_points);
            s.stat(&format!("{}_mollified_recovered_coefficient", case.name), m.coefficient * r0);
            s.check(Check::at_most(&format!("{}_mollified_coefficient", case.name), (r0 - 1.0).abs(), tol).report());
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"resolution": 8,
                "partition": {"interfaces": [{"profile": {"kind": "flat"}, "anchor": [0.5, 0.5, 0.5], "r0": 0.5, "m": 0.125, "alpha": 1.0}]},
                "params": {"r_start": 0.05, "ladder": 3, "h_min": 0.0125, "core": 0.06, "growth": 1.3, "cutoff_radius": 0.04,
                           "extrapolation_points": 2,
                           "cases": [{"name": "iso", "gamma": [1.0, 3.0]}], "write_fields": true}}"#,
        )
        .unwrap()
    }

    #[test]
    fn coarse_ladder_recovers_the_coefficient_roughly() {
        let out = super::super::run("asymptotics", &small()).unwrap();
        let rec = out.summary.stats["iso_recovered_coefficient"].as_f64().unwrap();
        assert!((rec - 0.5).abs() < 0.1, "{rec}");
        assert_eq!(out.table.len(), 9);
        assert_eq!(out.artifacts.len(), 2);
    }

    #[test]
    fn too_fine_ladder_lists_feasible_radii() {
        let mut cfg = small();
        cfg.params["r_start"] = serde_json::json!(0.005);
        cfg.params["ladder"] = serde_json::json!(4);
        match super::super::run("asymptotics", &cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("feasible"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
