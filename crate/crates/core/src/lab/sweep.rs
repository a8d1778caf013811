use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{median, Artifact, Check, ExperimentConfig, Summary, Table};
use crate::conductivity::{conductivity_id, linf_distance, ClassCConductivity};
use crate::dnmap::{assemble_dtn, op_norm_star, LocalDtN, TraceSpace};
use crate::fem::assemble;
use crate::geometry::{gen_layered_mesh_on, BoxAxes, SimplicialMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Points of the shrinking family, `t` log-spaced from 1 down to
    /// `shrink_min`.
    pub shrink_steps: usize,
    pub shrink_min: f64,
    pub scale: f64,
    /// Relative noise floor on `ε`.
    pub noise_floor: f64,
    pub dump_dtn: bool,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self { shrink_steps: 7, shrink_min: 1e-3, scale: 2.0, noise_floor: 1e-9, dump_dtn: false }
    }
}

const COLUMNS: [&str; 9] = ["case", "index", "t", "gamma1", "gamma2", "E", "epsilon", "ratio", "flagged"];

struct Bench<'a> {
    mesh: &'a SimplicialMesh,
    ts: TraceSpace,
    reference: ClassCConductivity,
}

impl Bench<'_> {
    fn dtn(&self, gamma: &[f64]) -> Result<(ClassCConductivity, LocalDtN)> {
        let c = self.reference.with_gamma(gamma.to_vec())?;
        let sys = assemble(self.mesh, &c)?;
        let d = assemble_dtn(&sys, &self.ts, &conductivity_id(&c))?;
        Ok((c, d))
    }
}

fn join(g: &[f64]) -> String {
    g.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(";")
}

fn sample_gamma(rng: &mut ChaCha8Rng, n: usize, gamma_bar: f64) -> Vec<f64> {
    let hi = -gamma_bar.ln();
    (0..n).map(|_| if hi == 0.0 { 1.0 } else { rng.gen_range(-hi..=hi).exp() }).collect()
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let p: SweepParams = cfg.params()?;
    let pairs = cfg.samples.unwrap_or(50);
    if pairs < 20 {
        return Err(Error::Config(format!("stability-sweep needs at least 20 samples, got {pairs}")));
    }
    if p.shrink_steps < 2 || !(p.shrink_min > 0.0 && p.shrink_min < 1.0) || !(p.scale > 0.0) {
        return Err(Error::Config("shrink_steps ≥ 2, 0 < shrink_min < 1 and scale > 0 required".into()));
    }
    let partition = cfg.partition.build()?;
    let n = partition.n_subdomains();
    let reference = cfg.conductivity_spec(n).build(partition.clone())?;
    let mesh = gen_layered_mesh_on(&BoxAxes::uniform_cube(cfg.resolution), &partition, None)?;
    let bench = Bench { mesh: &mesh, ts: TraceSpace::new(&mesh)?, reference };
    let gamma_bar = bench.reference.gamma_bar;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table::new(&COLUMNS);

    let record = |t: &mut Table, case: &str, index: usize, tt: f64, g1: &[f64], g2: &[f64]| -> Result<()> {
        let (c1, d1) = bench.dtn(g1)?;
        let (c2, d2) = bench.dtn(g2)?;
        let e = linf_distance(&c1, &c2)?;
        let eps = op_norm_star(&d1.difference(&d2)?, &bench.ts.gram)?.value;
        let scale = op_norm_star(&d1.lambda, &bench.ts.gram)?.value;
        let flagged = eps <= p.noise_floor * scale;
        let ratio = if flagged { f64::NAN } else { e / eps };
        t.push(vec![
            case.into(),
            index.into(),
            tt.into(),
            join(g1).into(),
            join(g2).into(),
            e.into(),
            eps.into(),
            ratio.into(),
            flagged.into(),
        ]);
        Ok(())
    };

    let mut first = None;
    for i in 0..pairs {
        let g1 = sample_gamma(&mut rng, n, gamma_bar);
        let g2 = sample_gamma(&mut rng, n, gamma_bar);
        record(&mut t, "pair", i, 1.0, &g1, &g2)?;
        first.get_or_insert((g1, g2));
    }
    let (g1, g2) = first.expect("at least one pair");
    for j in 0..p.shrink_steps {
        let s = p.shrink_min.powf(j as f64 / (p.shrink_steps - 1) as f64);
        let gt: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + s * (b - a)).collect();
        record(&mut t, "shrink", j, s, &g1, &gt)?;
    }
    record(&mut t, "identical", 0, 0.0, &g1, &g1)?;
    record(&mut t, "scale", 0, 1.0, &g1, &g2)?;
    let (c1, c2): (Vec<f64>, Vec<f64>) = (g1.iter().map(|v| v * p.scale).collect(), g2.iter().map(|v| v * p.scale).collect());
    record(&mut t, "scale", 1, p.scale, &c1, &c2)?;

    let mut artifacts = Vec::new();
    if p.dump_dtn {
        let (_, d) = bench.dtn(&g1)?;
        let mut bytes = Vec::new();
        d.write_text(&mut bytes)?;
        artifacts.push(Artifact { name: "dtn.txt".into(), bytes });
        let mut side = serde_json::to_vec_pretty(&d.sidecar(&mesh)?)?;
        side.push(b'\n');
        artifacts.push(Artifact { name: "dtn.json".into(), bytes: side });
    }
    Ok((t, artifacts))
}

pub(super) fn summarize(cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let mut s = Summary::new("stability-sweep", t.len());
    let pairs = t.select("case", "pair")?;
    let mut ratios = Vec::new();
    let mut flagged = 0usize;
    let mut all_finite = true;
    for &r in &pairs {
        if t.text(r, "flagged")? == "true" {
            flagged += 1;
            continue;
        }
        let q = t.num(r, "ratio")?;
        all_finite &= q.is_finite();
        ratios.push(q);
    }
    let empirical = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    s.stat("pairs", pairs.len());
    s.stat("flagged", flagged);
    s.stat("empirical_lipschitz", empirical);
    s.stat("median_ratio", median(&ratios));
    s.check(Check::at_least("pair_count", pairs.len() as f64, cfg.samples.unwrap_or(50).max(20) as f64));
    s.check(Check::holds("ratios_finite", all_finite && !ratios.is_empty()));
    if flagged > 0 {
        s.note(format!("{flagged} pairs below the noise floor excluded from the maximum"));
    }

    let mut shrink = Vec::new();
    for r in t.select("case", "shrink")? {
        shrink.push((t.num(r, "t")?, t.num(r, "ratio")?));
    }
    let sr: Vec<f64> = shrink.iter().map(|x| x.1).collect();
    let m = median(&sr);
    let spread = sr.iter().map(|q| (q / m).max(m / q)).fold(0.0f64, f64::max);
    s.stat("shrink_median_ratio", m);
    s.stat("shrink_ratios", &sr);
    s.check(Check::at_most("shrink_spread", if spread.is_nan() { f64::INFINITY } else { spread }, cfg.tol("shrink_spread", 3.0)));
    if let (Some(a), Some(b)) = (shrink.first(), shrink.last()) {
        s.stat("shrink_epsilon_decrease", a.0 / b.0);
    }

    for r in t.select("case", "identical")? {
        s.check(Check::at_most("identical_E", t.num(r, "E")?, 0.0));
        s.check(Check::holds("identical_flagged", t.text(r, "flagged")? == "true"));
    }
    let sc = t.select("case", "scale")?;
    if sc.len() == 2 {
        let (a, b) = (t.num(sc[0], "ratio")?, t.num(sc[1], "ratio")?);
        s.check(Check::at_most("scale_invariance", ((b - a) / a).abs(), cfg.tol("scale_invariance", 1e-6)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_passes() {
        let cfg = ExperimentConfig::from_json(r#"{"resolution": 4, "samples": 20, "params": {"dump_dtn": true}}"#).unwrap();
        let out = super::super::run("stability-sweep", &cfg).unwrap();
        assert!(out.summary.pass, "{:?}", out.summary.failed_checks());
        assert_eq!(out.table.select("case", "pair").unwrap().len(), 20);
        assert_eq!(out.artifacts.len(), 2);
    }

    #[test]
    fn too_few_samples() {
        let cfg = ExperimentConfig::from_json(r#"{"resolution": 4, "samples": 3}"#).unwrap();
        assert!(matches!(super::super::run("stability-sweep", &cfg), Err(Error::Config(_))));
    }
}
