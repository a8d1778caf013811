use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Artifact, Check, ExperimentConfig, Summary, Table};
use crate::stability_calculus::{delta_recursion, Branch, BudgetInputs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetParams {
    pub epsilon: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub iterates: Option<usize>,
    /// Chain lengths swept for the monotonicity rows; `1..=K` when empty.
    pub k_sweep: Vec<usize>,
    /// A `stability-sweep.summary.json` whose empirical constant is
    /// reported next to the budget.
    pub sweep_summary: Option<PathBuf>,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self { epsilon: 1e-3, e: 0.05, c: 2.0, k: 3, n: 3, iterates: None, k_sweep: Vec::new(), sweep_summary: None }
    }
}

const COLUMNS: [&str; 7] = ["case", "K", "epsilon", "E", "branch", "final_bound", "lipschitz_constant"];

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Trivial => "trivial",
        Branch::Recursion => "recursion",
    }
}

fn push(t: &mut Table, case: &str, inputs: &BudgetInputs) -> Result<()> {
    let b = delta_recursion(inputs)?;
    t.push(vec![
        case.into(),
        inputs.k.into(),
        inputs.epsilon.into(),
        inputs.e.into(),
        branch_name(b.branch).into(),
        b.final_bound.into(),
        b.lipschitz_constant.into(),
    ]);
    Ok(())
}

fn empirical_constant(path: &PathBuf) -> Result<f64> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    v["stats"]["empirical_lipschitz"]
        .as_f64()
        .ok_or_else(|| Error::Config(format!("{}: no stats.empirical_lipschitz", path.display())))
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<(Table, Vec<Artifact>)> {
    let p: BudgetParams = cfg.params()?;
    let base = BudgetInputs { epsilon: p.epsilon, e: p.e, c: p.c, k: p.k, n: p.n, iterates: p.iterates };
    base.validate().map_err(|e| Error::Config(e.to_string()))?;
    let ks: Vec<usize> = if p.k_sweep.is_empty() { (1..=p.k).collect() } else { p.k_sweep.clone() };
    if ks.iter().any(|&k| k < 1) {
        return Err(Error::Config("k_sweep entries must be at least 1".into()));
    }

    let mut t = Table::new(&COLUMNS);
    push(&mut t, "main", &base)?;
    for &k in &ks {
        push(&mut t, "k_sweep", &BudgetInputs { k, iterates: p.iterates, ..base })?;
    }
    push(&mut t, "zero_epsilon", &BudgetInputs { epsilon: 0.0, ..base })?;
    let eps = if p.epsilon > 0.0 { p.epsilon } else { 1.0 };
    push(&mut t, "trivial", &BudgetInputs { epsilon: eps, e: eps * std::f64::consts::E.powi(2) * 0.5, ..base })?;
    if let Some(path) = &p.sweep_summary {
        let c = empirical_constant(path)?;
        t.push(vec!["empirical".into(), p.k.into(), f64::NAN.into(), f64::NAN.into(), "sweep".into(), f64::NAN.into(), c.into()]);
    }

    let mut json = serde_json::to_vec_pretty(&delta_recursion(&base)?)?;
    json.push(b'\n');
    Ok((t, vec![Artifact { name: "budget.json".into(), bytes: json }]))
}

pub(super) fn summarize(cfg: &ExperimentConfig, t: &Table) -> Result<Summary> {
    let p: BudgetParams = cfg.params()?;
    let mut s = Summary::new("budget", t.len());
    let main = t.select("case", "main")?;
    if let Some(&r) = main.first() {
        s.stat("final_bound", t.num(r, "final_bound")?);
        s.stat("lipschitz_constant", t.num(r, "lipschitz_constant")?);
        s.stat("branch", t.text(r, "branch")?);
    }

    let mut sweep: Vec<(f64, f64)> = Vec::new();
    for r in t.select("case", "k_sweep")? {
        sweep.push((t.num(r, "K")?, t.num(r, "final_bound")?));
    }
    sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sweep.windows(2).all(|w| !(w[1].1 < w[0].1));
    s.check(Check::holds("budget_nondecreasing_in_K", monotone));

    for r in t.select("case", "zero_epsilon")? {
        let fb = t.num(r, "final_bound")?;
        s.check(Check::at_most("zero_epsilon_budget", fb.abs(), 0.0));
    }
    let e2 = std::f64::consts::E.powi(2);
    for r in t.select("case", "trivial")? {
        let ok = t.text(r, "branch")? == "trivial" && t.num(r, "lipschitz_constant")? == e2;
        s.check(Check::holds("trivial_branch_constant", ok));
    }
    for r in t.select("case", "empirical")? {
        let emp = t.num(r, "lipschitz_constant")?;
        s.stat("empirical_lipschitz", emp);
        if let Some(&m) = main.first() {
            let budget = t.num(m, "lipschitz_constant")?;
            s.check(Check::at_least("budget_dominates_empirical", budget, emp).report());
        }
    }
    s.note(format!("C = {} is an input, not derived", p.c));
    Ok(s)
}
