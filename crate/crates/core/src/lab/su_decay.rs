use serde::{Deserialize, Serialize};

use super::mesh_gen::augmented_axes;
use super::{loglog_fit, middle_window, Artifact, Cell, Check, ExperimentConfig, Summary, Table};
use crate::conductivity::{extend_to_augmented, linf_distance, ExtendedConductivity};
use crate::dnmap::{su_field, SuField};
use crate::fem::{assemble, solve_green_on, AssembledSystem, GreenMethod, GreenOptions};
use crate::geometry::{gen_layered_mesh_on, D0Geometry, Point3, SimplicialMesh};
use crate::stability_calculus::{cascade, delta_recursion, BudgetInputs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuDecayParams {
    pub d0_thickness: f64,
    /// Second conductivity; defaults to twice the first in every layer.
    pub gamma2: Option<Vec<f64>>,
    /// Distances `d(y)` of the ladder, smallest first.
    pub d_min: f64,
    pub d_max: f64,
    pub ladder: usize,
    /// Lateral position of the ladder.
    pub lateral: [f64; 2],
    /// Lateral offsets of the extra grid columns.
    pub grid_offsets: Vec<f64>,
    pub cascade_points: usize,
}

impl Default for SuDecayParams {
    fn default() -> Self {
        Self {
            d0_thickness: 1.0,
            gamma2: None,
            d_min: 0.1875,
            d_max: 0.75,
            ladder: 7,
            lateral: [0.5, 0.5],
            grid_offsets: vec![-0.25, 0.25],
            cascade_points: 6,
        }
    }
}

const COLUMNS: [&str; 13] = ["case", "index", "y1", "y2", "y3", "z1", "z2", "z3", "dy", "dz", "s_u", "weak_residual", "aux"];

struct Setup {
    mesh: SimplicialMesh,
    c1: ExtendedConductivity,
    c2: ExtendedConductivity,
    s1: AssembledSystem,
    s2: AssembledSystem,
    u: Vec<usize>,
    e: f64,
}

impl Setup {
    fn field(&self, z: &Point3, equal: bool) -> Result<SuField> {
        let opts = GreenOptions::with_method(GreenMethod::Mollified);
        let (sys2, c2) = if equal { (&self.s1, &self.c1) } else { (&self.s2, &self.c2) };
        let g2 = solve_green_on(&self.mesh, sys2, c2, z, &opts)?;
        su_field(&self.mesh, &self.s1, sys2, &g2, &self.u)
    }
}

fn ladder(p: &SuDecayParams) -> Vec<f64> {
    let n = p.ladder;
    (0..n).map(|i| p.d_min * (p.d_max / p.d_min).powf(i as f64 / (n - 1) as f64)).collect()
}

fn row(t: &mut Table, case: &str, i: usize, y: &Point3, z: &Point3, s: f64, res: f64, aux: f64) {
    let mut r: Vec<Cell> = vec![case.into(), i.into()];
    r.extend([y[0], y[1], y[2], z[0], z[1], z[2], y[2] - 1.0, z[2] - 1.0, s, res, aux].map(Cell::from));
    t.push(r);
}

fn guarded(err: &Error) -> bool {
    matches!(err, Error::SourceTooClose { .. } | Error::InsideExcluded(_) | Error::BelowResolution { .. })
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let p: SuDecayParams = cfg.params()?;
    if p.ladder < 3 || !(p.d_min > 0.0 && p.d_min < p.d_max && p.d_max < p.d0_thickness) {
        return Err(Error::Config("su-decay needs ladder ≥ 3 and 0 < d_min < d_max < d0_thickness".into()));
    }
    let partition = cfg.partition.build()?;
    let n = partition.n_subdomains();
    let base1 = cfg.conductivity_spec(n).build(partition.clone())?;
    let g2 = p.gamma2.clone().unwrap_or_else(|| base1.gamma.iter().map(|g| 2.0 * g).collect());
    let base2 = base1.with_gamma(g2).map_err(|e| Error::Config(format!("gamma2: {e}")))?;
    let d0 = D0Geometry::pad(p.d0_thickness);
    let (c1, c2) = (extend_to_augmented(&base1, d0)?, extend_to_augmented(&base2, d0)?);
    let mesh = gen_layered_mesh_on(&augmented_axes(cfg.resolution, Some(p.d0_thickness))?, &partition, Some(1.0 + p.d0_thickness))?;
    let h = mesh.h;
    let (s1, s2) = (assemble(&mesh, &c1)?, assemble(&mesh, &c2)?);
    let feasible = (4.0 * h, p.d0_thickness - 2.0 * h);
    if p.d_min < feasible.0 || p.d_max > feasible.1 {
        return Err(Error::Config(format!(
            "distance ladder [{}, {}] outside the feasible range [{:.4}, {:.4}] at resolution {}",
            p.d_min, p.d_max, feasible.0, feasible.1, cfg.resolution
        )));
    }
    let e = linf_distance(&base1, &base2)?;
    let setup = Setup { mesh, c1, c2, s1, s2, u: (1..=n).collect(), e };
    let ds = ladder(&p);
    let [lx, ly] = p.lateral;
    let at = |x: f64, y: f64, d: f64| Point3::new(x, y, 1.0 + d);
    let mut t = Table::new(&COLUMNS);

    let zmid = at(lx, ly, (p.d_min * p.d_max).sqrt());
    let fz = setup.field(&zmid, false)?;
    let mut pruned = 0usize;
    for (i, &d) in ds.iter().enumerate() {
        let y = at(lx, ly, d);
        match fz.eval(&setup.mesh, &setup.s1, &y) {
            Ok(s) => row(&mut t, "fixed_z", i, &y, &zmid, s, fz.weak_residual, 0.0),
            Err(err) if guarded(&err) => pruned += 1,
            Err(err) => return Err(err),
        }
        for (j, off) in p.grid_offsets.iter().enumerate() {
            let y = at(lx + off, ly, d);
            match fz.eval(&setup.mesh, &setup.s1, &y) {
                Ok(s) => row(&mut t, "grid", i * p.grid_offsets.len() + j, &y, &zmid, s, fz.weak_residual, 0.0),
                Err(err) if guarded(&err) => pruned += 1,
                Err(err) => return Err(err),
            }
        }
    }
    for (i, &d) in ds.iter().enumerate() {
        let z = at(lx, ly, d);
        let f = setup.field(&z, false)?;
        row(&mut t, "diagonal", i, &z, &z, f.eval(&setup.mesh, &setup.s1, &z)?, f.weak_residual, 0.0);
    }
    let f0 = setup.field(&zmid, true)?;
    for (i, &d) in ds.iter().enumerate() {
        let y = at(lx, ly, d);
        row(&mut t, "equal", i, &y, &zmid, f0.eval(&setup.mesh, &setup.s1, &y)?, f0.weak_residual, 0.0);
    }

    // cascade points approaching Σ from D0, non-assertive
    let ap = cfg.apriori;
    let (lip, r0) = ap.map(|a| (a.lipschitz_l, a.r0)).unwrap_or((1.0, 0.5));
    let cas = cascade(lip, r0, p.cascade_points.max(1))?;
    let mut first = None;
    for (k, &lam) in cas.lambda.iter().enumerate() {
        let w = at(lx, ly, lam);
        if lam > feasible.1 || lam < feasible.0 {
            pruned += 1;
            continue;
        }
        let f = setup.field(&w, false)?;
        let s = f.eval(&setup.mesh, &setup.s1, &w)?;
        let eps0 = *first.get_or_insert(s.abs().max(f64::MIN_POSITIVE));
        let budget = delta_recursion(&BudgetInputs { epsilon: eps0, e: setup.e, c: 1.0, k: k + 1, n: 3, iterates: None })?;
        row(&mut t, "cascade", k + 1, &w, &w, s, f.weak_residual, budget.final_bound);
    }
    let o = Point3::new(f64::NAN, f64::NAN, f64::NAN);
    row(&mut t, "meta", 0, &o, &o, setup.e, f64::NAN, pruned as f64);
    row(&mut t, "meta", 1, &o, &o, r0, f64::NAN, h);
    Ok((t, Vec::new()))
}

fn collect(t: &Table, case: &str) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut v = Vec::new();
    for r in t.select("case", case)? {
        v.push((t.num(r, "dy")?, t.num(r, "dz")?, t.num(r, "s_u")?, t.num(r, "weak_residual")?));
    }
    Ok(v)
}

pub(super) fn summarize(cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let mut s = Summary::new("su-decay", t.len());
    let meta = t.select("case", "meta")?;
    let (e, pruned, r0) = match meta.as_slice() {
        [a, b] => (t.num(*a, "s_u")?, t.num(*a, "aux")?, t.num(*b, "s_u")?),
        _ => return Err(Error::Config("su-decay rows lack the meta records".into())),
    };
    s.stat("E", e);
    s.stat("pruned", pruned);

    let fixed = collect(t, "fixed_z")?;
    let (dy, sv): (Vec<f64>, Vec<f64>) = fixed.iter().map(|r| (r.0, r.2.abs())).unzip();
    let slope = loglog_fit(&middle_window(&dy), &middle_window(&sv)).0;
    s.stat("fixed_z_slope", slope);
    s.stat("fixed_z_slope_full", loglog_fit(&dy, &sv).0);
    let target = -0.5;
    s.check(Check::at_most("fixed_z_exponent", (slope - target).abs(), cfg.tol("fixed_z_exponent", 0.125)));

    let diag = collect(t, "diagonal")?;
    let (pd, dv): (Vec<f64>, Vec<f64>) = diag.iter().map(|r| (r.0 * r.1, r.2.abs())).unzip();
    let dslope = loglog_fit(&middle_window(&pd), &middle_window(&dv)).0;
    s.stat("diagonal_product_slope", dslope);
    s.check(Check::at_most("diagonal_product_exponent", (dslope - target).abs(), 0.125).report());

    let all: Vec<_> = fixed.iter().chain(&diag).chain(&collect(t, "grid")?).copied().collect();
    let constant = all.iter().map(|r| r.2.abs() * (r.0 * r.1).sqrt() / e).fold(0.0f64, f64::max);
    s.stat("fitted_constant", constant);
    let weak = all.iter().map(|r| r.3).fold(0.0f64, f64::max);
    s.stat("max_weak_residual", weak);
    s.check(Check::at_most("weak_residual", weak, cfg.tol("weak_residual", 1e-6)));

    let zero = collect(t, "equal")?.iter().map(|r| r.2.abs()).fold(0.0f64, f64::max);
    s.check(Check::at_most("equal_conductivities_zero", zero, 0.0));

    let gate: Vec<f64> = all.iter().filter(|r| r.0 >= r0 / 3.0 && r.1 >= r0 / 3.0).map(|r| r.2.abs()).collect();
    if !gate.is_empty() {
        let eps0 = r0 * gate.iter().copied().fold(0.0f64, f64::max);
        s.stat("hypothesis_epsilon0", eps0);
    }
    let cas = collect(t, "cascade")?;
    s.stat("cascade_points", cas.len());
    s.note("cascade rows compare |S_U| with the budget curve for C = 1; qualitative only");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_run_has_zero_and_small_residual() {
        let cfg = ExperimentConfig::from_json(
            r#"{"resolution": 8, "params": {"d_min": 0.5, "d_max": 0.7, "ladder": 3, "grid_offsets": [], "cascade_points": 2}}"#,
        )
        .unwrap();
        let out = super::super::run("su-decay", &cfg).unwrap();
        let by = |n: &str| out.summary.checks.iter().find(|c| c.name == n).unwrap().pass;
        assert!(by("equal_conductivities_zero"));
        assert!(by("weak_residual"));
        assert_eq!(out.table.select("case", "diagonal").unwrap().len(), 3);
    }

    #[test]
    fn infeasible_ladder_is_rejected() {
        let cfg = ExperimentConfig::from_json(r#"{"resolution": 4, "params": {"d_min": 0.05}}"#).unwrap();
        assert!(matches!(super::super::run("su-decay", &cfg), Err(Error::Config(_))));
    }
}
