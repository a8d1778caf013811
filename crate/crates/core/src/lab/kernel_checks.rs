use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Artifact, Cell, Check, ExperimentConfig, Summary, Table};
use crate::geometry::Point;
use crate::kernels::{
    build_change_of_basis, gamma_eval, j_matrix, smooth_bump, weak_delta_pairing, AnisoTwoPhaseKernel, Side,
    TwoPhaseKernel,
};
use crate::Result;

type P3 = Point<3>;

/// One row of the kernel suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckRecord {
    pub check: String,
    pub points: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl KernelCheckRecord {
    fn new(check: &str, points: usize, residual: f64, tolerance: f64) -> Self {
        Self { check: check.into(), points, residual, tolerance, pass: residual <= tolerance }
    }
}

const COLUMNS: [&str; 5] = ["check", "points", "residual", "tolerance", "pass"];

fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    m * m.transpose() + Matrix3::identity() * 0.2
}

fn point(rng: &mut ChaCha8Rng, side: Option<Side>) -> P3 {
    let mut p = P3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.0));
    let lower = match side {
        Some(Side::Lower) => true,
        Some(Side::Upper) => false,
        None => rng.gen_bool(0.5),
    };
    if lower {
        p[2] = -p[2];
    }
    p
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Every kernel invariant at seeded random samples.
pub fn records(seed: u64, samples: usize, cfg: &ExperimentConfig) -> Result<Vec<KernelCheckRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = identity_records(&mut rng, samples, cfg)?;
    out.extend(change_of_basis_records(&mut rng, samples, cfg)?);
    out.extend(weak_delta_records(&mut rng, cfg)?);
    Ok(out)
}

/// Degeneration, transmission, symmetry and gradient checks of the flat
/// two-phase kernels.
pub fn identity_records(rng: &mut ChaCha8Rng, samples: usize, cfg: &ExperimentConfig) -> Result<Vec<KernelCheckRecord>> {
    let n = samples.max(1);
    let mut out = Vec::new();

    let h1 = TwoPhaseKernel::<3>::new(1.0)?;
    let mut r = 0.0f64;
    for _ in 0..n {
        let (x, y) = (point(rng, None), point(rng, None));
        r = r.max((h1.eval(&x, &y)? - gamma_eval(&x, &y)?).abs());
        r = r.max((h1.grad(&x, &y, None)? - crate::kernels::gamma_grad(&x, &y)?).amax());
    }
    out.push(KernelCheckRecord::new("unit_contrast_degeneration", n, r, cfg.tol("unit_contrast_degeneration", 0.0)));

    let mut r = 0.0f64;
    for _ in 0..n {
        let k: f64 = (rng.gen_range(-3.0f64..3.0)).exp();
        r = r.max(rel(1.0 / k + (k - 1.0) / (k * (k + 1.0)), 2.0 / (k + 1.0)));
    }
    out.push(KernelCheckRecord::new("continuity_identity", n, r, cfg.tol("continuity_identity", 1e-12)));

    let (mut rc, mut rf, mut rt) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let k: f64 = (rng.gen_range(-2.5f64..2.5)).exp();
        let h = TwoPhaseKernel::<3>::new(k)?;
        let eta = point(rng, None);
        let xi = P3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
        let es = Side::of(&eta);
        let up = h.eval_sided(&xi, &eta, Side::Upper, es)?;
        let lo = h.eval_sided(&xi, &eta, Side::Lower, es)?;
        rc = rc.max(rel(up, lo));
        let gu = h.grad(&xi, &eta, Some(Side::Upper))?;
        let gl = h.grad(&xi, &eta, Some(Side::Lower))?;
        rf = rf.max((k * gu[2] - gl[2]).abs() / gl[2].abs().max(1e-3));
        rt = rt.max(((gu[0] - gl[0]).abs() + (gu[1] - gl[1]).abs()) / gl.norm());
    }
    out.push(KernelCheckRecord::new("interface_continuity", n, rc, cfg.tol("interface_continuity", 1e-12)));
    out.push(KernelCheckRecord::new("flux_transmission", n, rf, cfg.tol("flux_transmission", 1e-9)));
    out.push(KernelCheckRecord::new("tangential_continuity", n, rt, cfg.tol("tangential_continuity", 1e-9)));

    let (mut rs, mut rg) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let k: f64 = (rng.gen_range(-2.0f64..2.0)).exp();
        let kern = AnisoTwoPhaseKernel::<3>::new(&random_spd(rng), k)?;
        let (x, y) = (point(rng, None), point(rng, None));
        let a = kern.eval(&x, &y)?;
        rs = rs.max(rel(kern.eval(&y, &x)?, a));
        let g = kern.grad(&x, &y, None)?;
        let s = 1e-6 * (x - y).norm();
        for i in 0..3 {
            let mut e = P3::zeros();
            e[i] = s;
            if Side::of(&(x + e)) != Side::of(&x) || Side::of(&(x - e)) != Side::of(&x) {
                continue;
            }
            let fd = (kern.eval(&(x + e), &y)? - kern.eval(&(x - e), &y)?) / (2.0 * s);
            rg = rg.max((fd - g[i]).abs() / g.norm());
        }
    }
    out.push(KernelCheckRecord::new("symmetry", n, rs, cfg.tol("symmetry", 1e-12)));
    out.push(KernelCheckRecord::new("gradient_differences", n, rg, cfg.tol("gradient_differences", 1e-6)));
    Ok(out)
}

/// Factorization `A0 = L⁻¹L⁻ᵀ`, the normal component, `J`, the closed
/// form across the interface and the isotropic limit.
pub fn change_of_basis_records(rng: &mut ChaCha8Rng, samples: usize, cfg: &ExperimentConfig) -> Result<Vec<KernelCheckRecord>> {
    let n = samples.max(1);
    let mut out = Vec::new();

    let (mut rl, mut rn, mut rj, mut rm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let a0 = random_spd(rng);
        let b = build_change_of_basis(&a0)?;
        let linv = b.l.try_inverse().ok_or(crate::Error::NotSpd { eigenvalue: 0.0 })?;
        rl = rl.max((linv * linv.transpose() - a0).amax() / a0.amax().max(1.0));
        let xi = point(rng, None);
        rn = rn.max(((b.l * xi)[2] - xi[2] / b.v_norm).abs() / xi.norm());
        let j = j_matrix(&a0)?.j;
        rj = rj.max((j * a0 * j - Matrix3::identity()).amax() / (j.norm().powi(2) * a0.norm()));
        let kern = AnisoTwoPhaseKernel::<3>::new(&a0, rng.gen_range(0.2..5.0))?;
        let (x, y) = (point(rng, Some(Side::Upper)), point(rng, Some(Side::Lower)));
        rm = rm.max(rel(kern.mid_branch_closed_form(&x, &y)?, kern.eval(&x, &y)?));
    }
    out.push(KernelCheckRecord::new("change_of_basis_factor", n, rl, cfg.tol("change_of_basis_factor", 1e-12)));
    out.push(KernelCheckRecord::new("change_of_basis_normal", n, rn, cfg.tol("change_of_basis_normal", 1e-12)));
    out.push(KernelCheckRecord::new("j_square_root", n, rj, cfg.tol("j_square_root", 1e-12)));
    out.push(KernelCheckRecord::new("mid_branch_closed_form", n, rm, cfg.tol("mid_branch_closed_form", 1e-12)));

    let mut r = 0.0f64;
    for _ in 0..n {
        let k: f64 = (rng.gen_range(-2.0f64..2.0)).exp();
        let a = AnisoTwoPhaseKernel::<3>::new(&Matrix3::identity(), k)?;
        let h = TwoPhaseKernel::<3>::new(k)?;
        let (x, y) = (point(rng, None), point(rng, None));
        r = r.max((a.eval(&x, &y)? - h.eval(&x, &y)?).abs());
    }
    out.push(KernelCheckRecord::new("identity_anisotropy", n, r, cfg.tol("identity_anisotropy", 0.0)));
    Ok(out)
}

/// Pairing of `σ∇K(·,η)` against the gradient of a normalized bump.
pub fn weak_delta_records(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig) -> Result<Vec<KernelCheckRecord>> {
    let mut out = Vec::new();

    let order = 48;
    let mut ri = 0.0f64;
    let mut pts = 0;
    for (k, z) in [(3.0, -0.2), (0.4, 0.15), (10.0, -0.05)] {
        let h = TwoPhaseKernel::<3>::new(k)?;
        let eta = P3::new(0.0, 0.0, z);
        let pair = weak_delta_pairing(|x| h.grad(x, &eta, None), |x| Matrix3::identity() * h.phase(x), &eta, &eta, 0.5, order)?;
        ri = ri.max((pair - 1.0).abs());
        pts += 1;
    }
    out.push(KernelCheckRecord::new("weak_delta_isotropic", pts, ri, cfg.tol("weak_delta_isotropic", 1e-2)));

    let mut ra = 0.0f64;
    let mut pts = 0;
    for _ in 0..3 {
        let a0 = random_spd(rng) + Matrix3::identity() * 0.5;
        let kern = AnisoTwoPhaseKernel::<3>::new(&a0, rng.gen_range(0.3..4.0))?;
        let eta = P3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.25..0.25));
        let centre = P3::new(0.0, 0.0, rng.gen_range(-0.1..0.1));
        let (psi, _) = smooth_bump(&eta, &centre, 0.6);
        let pair = weak_delta_pairing(|x| kern.grad(x, &eta, None), |x| kern.sigma(x), &eta, &centre, 0.6, order)?;
        ra = ra.max((pair / psi - 1.0).abs());
        pts += 1;
    }
    out.push(KernelCheckRecord::new("weak_delta_anisotropic", pts, ra, cfg.tol("weak_delta_anisotropic", 1e-2)));
    Ok(out)
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let recs = records(cfg.seed, cfg.samples.unwrap_or(100), cfg)?;
    let mut t = Table::new(&COLUMNS);
    for r in &recs {
        t.push(vec![Cell::from(r.check.as_str()), r.points.into(), r.residual.into(), r.tolerance.into(), r.pass.into()]);
    }
    let json = serde_json::to_vec_pretty(&recs)?;
    Ok((t, vec![Artifact { name: "kernel-checks.records.json".into(), bytes: json }]))
}

pub(super) fn summarize(_cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let mut s = Summary::new("kernel-checks", t.len());
    for r in 0..t.len() {
        let name = t.text(r, "check")?;
        s.check(Check::at_most(&name, t.num(r, "residual")?, t.num(r, "tolerance")?));
    }
    s.stat("checks", t.len());
    Ok(s)
}
