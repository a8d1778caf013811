//! Acceptance criteria. One line per criterion with its runtime; exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use eitlab::conductivity::{conductivity_id, ClassCConductivity, MatrixField};
use eitlab::dnmap::{assemble_dtn, harmonic_extension, op_norm_star, op_norm_star_dense, TraceSpace};
use eitlab::fem::{
    annulus_energy, assemble, h1_seminorm_error, interpolate, solve_dirichlet, solve_green_on, GreenMethod, GreenOptions,
};
use eitlab::geometry::{gen_layered_box_mesh, gen_layered_mesh_on, graded_axis, BoxAxes, LayeredPartition, Point3};
use eitlab::lab::kernel_checks::{change_of_basis_records, identity_records, weak_delta_records, KernelCheckRecord};
use eitlab::lab::{self, loglog_fit, ExperimentConfig, Outcome};
use eitlab::stability_calculus::{cascade, delta_recursion, h_bar, Branch, BudgetInputs, OmegaWeight, PLATEAU};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<(bool, String), String>;

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
}

fn report(c: &Criterion, elapsed: Duration, verdict: Verdict) -> bool {
    let (ok, detail) = match verdict {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = c.limit.map_or(true, |l| elapsed <= l);
    let pass = ok && in_time;
    let limit = c.limit.map_or("no limit".to_string(), |l| format!("limit {} s", l.as_secs()));
    let late = if in_time { "" } else { " [over time]" };
    println!(
        "{} {:>2} {:<22} {:>8.2} s ({limit}){late}  {detail}",
        if pass { "PASS" } else { "FAIL" },
        c.id,
        c.name,
        elapsed.as_secs_f64()
    );
    pass
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn config(name: &str) -> Result<ExperimentConfig, String> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    ExperimentConfig::load(&p).map_err(e)
}

fn records_verdict(recs: &[KernelCheckRecord]) -> Verdict {
    let failed: Vec<String> = recs.iter().filter(|r| !r.pass).map(|r| format!("{}={:.2e}", r.check, r.residual)).collect();
    let worst = recs.iter().map(|r| format!("{} {:.1e}", r.check, r.residual)).collect::<Vec<_>>().join(", ");
    Ok((failed.is_empty(), if failed.is_empty() { worst } else { format!("failed: {}", failed.join(", ")) }))
}

fn kernel_identities() -> Verdict {
    let cfg = ExperimentConfig::default();
    let recs = identity_records(&mut ChaCha8Rng::seed_from_u64(101), 100, &cfg).map_err(e)?;
    let wanted = ["unit_contrast_degeneration", "continuity_identity", "flux_transmission"];
    for w in wanted {
        if !recs.iter().any(|r| r.check == w && r.points >= 100) {
            return Err(format!("missing {w}"));
        }
    }
    // With k = p/q, multiplying by k(k+1) q turns the identity into (p + q) + (p − q) = 2p.
    let mut exact = true;
    for p in 1i64..=60 {
        for q in 1i64..=60 {
            let (num_l, den_l) = (q * q * (p + q) + (p - q) * q * q, p * q * (p + q));
            let (num_r, den_r) = (2 * q, p + q);
            exact &= num_l * den_r == num_r * den_l;
        }
    }
    let (ok, d) = records_verdict(&recs)?;
    Ok((ok && exact, format!("{d}; rational identity exact over k = p/q, p,q <= 60: {exact}")))
}

fn change_of_basis() -> Verdict {
    let cfg = ExperimentConfig::default();
    let recs = change_of_basis_records(&mut ChaCha8Rng::seed_from_u64(102), 100, &cfg).map_err(e)?;
    records_verdict(&recs)
}

fn weak_delta() -> Verdict {
    let cfg = ExperimentConfig::default();
    let recs = weak_delta_records(&mut ChaCha8Rng::seed_from_u64(103), &cfg).map_err(e)?;
    let ok = recs.iter().all(|r| r.tolerance <= 1e-2 && r.pass);
    let (_, d) = records_verdict(&recs)?;
    Ok((ok, d))
}

fn fem_correctness() -> Verdict {
    let mesh = gen_layered_box_mesh(1, &[], 6).map_err(e)?;
    let cond = ClassCConductivity::new(vec![1.0], 1.0, MatrixField::identity(), LayeredPartition::single()).map_err(e)?;
    let sys = assemble(&mesh, &cond).map_err(e)?;
    let g = interpolate(&mesh, |x| 0.3 + x[0] - 2.0 * x[1] + 0.5 * x[2]);
    let (u, _) = solve_dirichlet(&sys, &g).map_err(e)?;
    let lin = u.values.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    // σ = γ_j (1 + x3/2) I, interface at 1/2, u(x3=0) = 0, u(x3=1) = 1.
    let (c, g1, g2) = (0.5, 1.0, 4.0);
    let slope = 0.5;
    let field = MatrixField::affine(Matrix3::identity(), [Matrix3::zeros(), Matrix3::zeros(), Matrix3::identity() * slope], slope, 1.5);
    let part = LayeredPartition::two_layer_flat(c).map_err(e)?;
    let cond = ClassCConductivity::new(vec![g1, g2], 0.2, field, part.clone()).map_err(e)?;
    let prim = |z: f64| (1.0 + slope * z).ln() / slope;
    let gamma = |z: f64| if z <= c { g1 } else { g2 };
    let q = 1.0 / (prim(c) / g1 + (prim(1.0) - prim(c)) / g2);
    let exact = |z: f64| if z <= c { q * prim(z) / g1 } else { q * (prim(c) / g1 + (prim(z) - prim(c)) / g2) };
    let mut errs = Vec::new();
    let res = [8usize, 16, 32];
    for &r in &res {
        let mesh = gen_layered_box_mesh(2, &part.interfaces, r).map_err(e)?;
        let sys = assemble(&mesh, &cond).map_err(e)?;
        let data = interpolate(&mesh, |x| exact(x[2]));
        let (u, _) = solve_dirichlet(&sys, &data).map_err(e)?;
        let err = h1_seminorm_error(&mesh, &sys, &u, |x| Vector3::new(0.0, 0.0, q / (gamma(x[2]) * (1.0 + slope * x[2]))), 3);
        errs.push(err);
    }
    let h: Vec<f64> = res.iter().map(|r| 1.0 / *r as f64).collect();
    let (rate, _) = loglog_fit(&h, &errs);
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    Ok((
        lin <= 1e-10 && decreasing && rate >= 0.8,
        format!("linear nodal error {lin:.1e}; H1 errors {:.3e} {:.3e} {:.3e}, rate {rate:.3} (need >= 0.8)", errs[0], errs[1], errs[2]),
    ))
}

fn dtn_map() -> Verdict {
    let part = LayeredPartition::two_layer_flat(0.5).map_err(e)?;
    let mesh = gen_layered_box_mesh(2, &part.interfaces, 8).map_err(e)?;
    let c1 = ClassCConductivity::new(vec![1.0, 2.5], 0.1, MatrixField::identity(), part.clone()).map_err(e)?;
    let c2 = ClassCConductivity::new(vec![1.0, 1.5], 0.1, MatrixField::identity(), part).map_err(e)?;
    let ts = TraceSpace::new(&mesh).map_err(e)?;
    let s1 = assemble(&mesh, &c1).map_err(e)?;
    let s2 = assemble(&mesh, &c2).map_err(e)?;
    let d1 = assemble_dtn(&s1, &ts, &conductivity_id(&c1)).map_err(e)?;
    let d2 = assemble_dtn(&s2, &ts, &conductivity_id(&c2)).map_err(e)?;
    let sym = d1.symmetry_defect().max(d2.symmetry_defect());

    let c = 3.0;
    let ds = assemble_dtn(&assemble(&mesh, &c1.scaled(c)).map_err(e)?, &ts, "scaled").map_err(e)?;
    let scale_dev = (&ds.lambda - &d1.lambda * c).amax() / d1.lambda.amax();
    let four = assemble_dtn(&assemble(&mesh, &c1.scaled(4.0)).map_err(e)?, &ts, "scaled").map_err(e)?;
    let scale_exact = four.lambda == &d1.lambda * 4.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut energy_dev = 0.0f64;
    for _ in 0..3 {
        let g: Vec<f64> = (0..ts.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gv = DVector::from_vec(g.clone());
        let quad = gv.dot(&(&d1.lambda * &gv));
        let u = harmonic_extension(&s1, &ts, &g).map_err(e)?;
        let en = s1.energy_pairing(&u.values, &u.values);
        energy_dev = energy_dev.max((quad - en).abs() / en);
    }

    let diff: DMatrix<f64> = d1.difference(&d2).map_err(e)?;
    let it = op_norm_star(&diff, &ts.gram).map_err(e)?.value;
    let dense = op_norm_star_dense(&diff, &ts.gram).map_err(e)?;
    let norm_dev = (it - dense).abs() / dense;
    Ok((
        sym <= 1e-10 && scale_exact && scale_dev <= 1e-12 && energy_dev <= 1e-8 && norm_dev <= 1e-6,
        format!(
            "symmetry {sym:.1e}; scaling by 3 deviates {scale_dev:.1e}, by 4 bitwise equal: {scale_exact}; energy {energy_dev:.1e}; op norm {it:.6e} vs dense {dense:.6e} ({norm_dev:.1e})"
        ),
    ))
}

fn green_bounds() -> Verdict {
    let part = LayeredPartition::two_layer_flat(0.8).map_err(e)?;
    let cond = ClassCConductivity::new(vec![1.0, 3.0], 0.2, MatrixField::identity(), part.clone()).map_err(e)?;

    let y = Point3::new(0.5, 0.5, 0.5);
    let ax = |f: f64| graded_axis(0.0, 1.0, f, 0.003, 0.01, 1.25, 1.0 / 16.0);
    let axes = BoxAxes { x: ax(y[0]), y: ax(y[1]), z: ax(y[2]) };
    let mesh = gen_layered_mesh_on(&axes, &part, None).map_err(e)?;
    let sys = assemble(&mesh, &cond).map_err(e)?;
    let opts = GreenOptions { cutoff_radius: Some(0.006), ..GreenOptions::default() };
    let g = solve_green_on(&mesh, &sys, &cond, &y, &opts).map_err(e)?;

    let mut samples = 0;
    let mut bound_ok = true;
    let mut worst = 0.0f64;
    let dirs = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(1.0, 1.0, 1.0).normalize(),
        Vector3::new(1.0, -1.0, -1.0).normalize(),
    ];
    for d in dirs {
        for r in [0.015, 0.03, 0.06, 0.12, 0.25] {
            let x = y + d * r;
            let v = g.eval(&mesh, &x).map_err(e)?;
            let cap = 1.0 / r;
            bound_ok &= v > 0.0 && v < cap;
            worst = worst.max(v * r);
            samples += 1;
        }
    }
    let across = y + Vector3::new(0.0, 0.0, 0.4);
    let v = g.eval(&mesh, &across).map_err(e)?;
    bound_ok &= v > 0.0 && v < 1.0 / 0.4;
    samples += 1;

    let radii = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
    let mut energy = Vec::new();
    for &r in &radii {
        energy.push(annulus_energy(&g, &mesh, &sys, r).map_err(e)?.plain);
    }
    let (slope, _) = loglog_fit(&radii, &energy);

    let part = LayeredPartition::two_layer_flat(0.5).map_err(e)?;
    let cond = ClassCConductivity::new(vec![1.0, 3.0], 0.2, MatrixField::identity(), part.clone()).map_err(e)?;
    let umesh = gen_layered_box_mesh(2, &part.interfaces, 16).map_err(e)?;
    let usys = assemble(&umesh, &cond).map_err(e)?;
    let mo = GreenOptions::with_method(GreenMethod::Mollified);
    let (a, b) = (Point3::new(0.35, 0.5, 0.4), Point3::new(0.65, 0.5, 0.62));
    let ga = solve_green_on(&umesh, &usys, &cond, &a, &mo).map_err(e)?;
    let gb = solve_green_on(&umesh, &usys, &cond, &b, &mo).map_err(e)?;
    let (gab, gba) = (ga.eval(&umesh, &b).map_err(e)?, gb.eval(&umesh, &a).map_err(e)?);
    let asym = (gab - gba).abs() / gab.abs().max(gba.abs());

    Ok((
        bound_ok && asym <= 0.05 && (slope + 1.0).abs() <= 0.15,
        format!(
            "0 < G < |x-y|^-1 at {samples} points: {bound_ok} (max G|x-y| {worst:.3}); mollified asymmetry {:.2}%; annulus slope {slope:.3} (need -1 +- 0.15)",
            100.0 * asym
        ),
    ))
}

fn experiment(name: &str, store: &mut BTreeMap<String, Vec<u8>>) -> Result<Outcome, String> {
    let cfg = config(name)?;
    let out = lab::run(name, &cfg).map_err(e)?;
    let mut rows = Vec::new();
    out.table.write_csv(&mut rows).map_err(e)?;
    store.insert(name.to_string(), rows);
    Ok(out)
}

fn fmt(f: f64) -> String {
    if f != 0.0 && f.abs() < 1e-3 {
        format!("{f:.3e}")
    } else {
        format!("{f:.4}")
    }
}

fn checks_line(out: &Outcome, keys: &[&str]) -> String {
    let mut parts: Vec<String> = keys
        .iter()
        .filter_map(|k| out.summary.stats.get(*k).map(|v| format!("{k}={}", v.as_f64().map_or(v.to_string(), fmt))))
        .collect();
    for c in out.summary.failed_checks() {
        parts.push(format!("FAILED {} = {:?} {} {:?}", c.name, c.value, c.relation, c.bound));
    }
    parts.join("; ")
}

fn asymptotics(store: &mut BTreeMap<String, Vec<u8>>) -> Verdict {
    let out = experiment("asymptotics", store)?;
    let keys = [
        "isotropic_recovered_coefficient",
        "anisotropic_recovered_coefficient",
        "isotropic_residual_exponent",
        "anisotropic_residual_exponent",
    ];
    let required = ["isotropic_coefficient", "isotropic_residual_exponent", "anisotropic_coefficient"];
    let present = required.iter().all(|r| out.summary.checks.iter().any(|c| c.name == *r && c.asserted));
    Ok((out.summary.pass && present, checks_line(&out, &keys)))
}

fn su_decay(store: &mut BTreeMap<String, Vec<u8>>) -> Verdict {
    let out = experiment("su-decay", store)?;
    let keys = ["fixed_z_slope", "diagonal_product_slope", "max_weak_residual"];
    Ok((out.summary.pass, checks_line(&out, &keys)))
}

fn sweep(store: &mut BTreeMap<String, Vec<u8>>) -> Verdict {
    let out = experiment("stability-sweep", store)?;
    let keys = ["pairs", "median_ratio", "empirical_lipschitz", "shrink_epsilon_decrease"];
    let pairs = out.summary.stats.get("pairs").and_then(|v| v.as_f64()).unwrap_or(0.0);
    Ok((out.summary.pass && pairs >= 50.0, checks_line(&out, &keys)))
}

fn calculus() -> Verdict {
    let mut round = 0.0f64;
    let mut points = 0;
    for b in [0.25, 0.5, 1.0, 2.0] {
        let w = OmegaWeight::new(b).map_err(e)?;
        // below s_min the inverse underflows past the normal range
        let s_min = PLATEAU * (2.0 / -f64::MIN_POSITIVE.ln()).powf(b) * 1.01;
        let s_max = PLATEAU * 0.999;
        for i in 0..=200 {
            let s = s_min * (s_max / s_min).powf(i as f64 / 200.0);
            round = round.max((w.eval(w.inverse(s).map_err(e)?).map_err(e)? - s).abs() / s);
            points += 1;
        }
    }
    let mut ratio_exact = true;
    let mut hbar_ok = true;
    for (l, r0) in [(0.5, 1.0), (1.0, 0.3), (3.0, 0.5)] {
        let c = cascade(l, r0, 30).map_err(e)?;
        for k in 1..30 {
            ratio_exact &= c.lambda[k] == c.a * c.lambda[k - 1] && c.rho[k] == c.a * c.rho[k - 1];
            ratio_exact &= c.d[k - 1] == c.lambda[k - 1] - c.rho[k - 1];
        }
        for frac in [1.0, 0.5, 0.1, 0.013, 1e-4] {
            let r = c.d[0] * frac;
            let scan = (1..).find(|&k| c.d_at(k) <= r).unwrap();
            hbar_ok &= h_bar(&c, r).map_err(e)? == scan;
        }
    }
    let mut trivial_ok = true;
    for (eps, e_) in [(1.0, 1.0), (0.01, 0.0), (0.5, 0.5 * std::f64::consts::E.powi(2))] {
        let b = delta_recursion(&BudgetInputs { epsilon: eps, e: e_, c: 2.0, k: 3, n: 3, iterates: None }).map_err(e)?;
        trivial_ok &= b.branch == Branch::Trivial && b.lipschitz_constant == std::f64::consts::E.powi(2);
    }
    Ok((
        round <= 1e-12 && ratio_exact && hbar_ok && trivial_ok,
        format!("round trip {round:.1e} over {points} points; geometric ratios exact: {ratio_exact}; h-bar matches scan: {hbar_ok}; trivial branch e^2: {trivial_ok}"),
    ))
}

fn determinism(store: &BTreeMap<String, Vec<u8>>) -> Verdict {
    let mut same = Vec::new();
    let mut differ = Vec::new();
    for name in lab::EXPERIMENTS {
        let cfg = config(name)?;
        let first = match store.get(name) {
            Some(r) => r.clone(),
            None => {
                let mut v = Vec::new();
                lab::run(name, &cfg).map_err(e)?.table.write_csv(&mut v).map_err(e)?;
                v
            }
        };
        let mut again = Vec::new();
        lab::run(name, &cfg).map_err(e)?.table.write_csv(&mut again).map_err(e)?;
        if first == again {
            same.push(name);
        } else {
            differ.push(name);
        }
    }
    Ok((differ.is_empty(), format!("identical: {}; differing: [{}]", same.join(", "), differ.join(", "))))
}

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let mut store = BTreeMap::new();
    let mut all = true;
    let mut run = |id, name, limit: Option<Duration>, f: &mut dyn FnMut(&mut BTreeMap<String, Vec<u8>>) -> Verdict| {
        let c = Criterion { id, name, limit };
        let t = Instant::now();
        let v = f(&mut store);
        all &= report(&c, t.elapsed(), v);
    };
    run(1, "kernel identities", Some(s(1)), &mut |_| kernel_identities());
    run(2, "change of basis", Some(s(1)), &mut |_| change_of_basis());
    run(3, "weak delta", Some(s(10)), &mut |_| weak_delta());
    run(4, "fem correctness", Some(s(120)), &mut |_| fem_correctness());
    run(5, "dtn map", Some(s(60)), &mut |_| dtn_map());
    run(6, "green bounds", Some(s(180)), &mut |_| green_bounds());
    run(7, "asymptotics", Some(s(600)), &mut asymptotics);
    run(8, "su decay", Some(s(300)), &mut su_decay);
    run(9, "stability sweep", Some(s(900)), &mut sweep);
    run(10, "stability calculus", Some(s(1)), &mut |_| calculus());
    run(11, "determinism", None, &mut |st| determinism(st));
    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria FAIL");
        ExitCode::FAILURE
    }
}
