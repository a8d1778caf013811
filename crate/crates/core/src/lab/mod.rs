//! Experiment orchestration: configuration, row tables, summaries and the
//! experiments behind the `eitlab` CLI.

mod asymptotics;
mod budget;
pub mod kernel_checks;
mod mesh_gen;
mod su_decay;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conductivity::ConductivitySpec;
use crate::geometry::{InterfaceGraph, LayeredPartition};
use crate::{Error, Result};

pub use asymptotics::{AsymptoticCase, AsymptoticsParams};
pub use budget::BudgetParams;
pub use kernel_checks::KernelCheckRecord;
pub use mesh_gen::MeshGenParams;
pub use su_decay::SuDecayParams;
pub use sweep::SweepParams;

pub const EXPERIMENTS: [&str; 6] = ["asymptotics", "stability-sweep", "su-decay", "kernel-checks", "budget", "mesh-gen"];

/// An interface given either by its height (flat, default constants) or in
/// full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterfaceSpec {
    Height(f64),
    Graph(InterfaceGraph),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub interfaces: Vec<InterfaceSpec>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self { interfaces: vec![InterfaceSpec::Height(0.5)] }
    }
}

impl PartitionSpec {
    pub fn build(&self) -> Result<LayeredPartition> {
        let graphs = self
            .interfaces
            .iter()
            .map(|s| match s {
                InterfaceSpec::Height(z) => InterfaceGraph::flat(*z),
                InterfaceSpec::Graph(g) => g.clone(),
            })
            .collect();
        LayeredPartition::new(graphs).map_err(|e| Error::Config(format!("partition: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub conductivity: Option<ConductivitySpec>,
    #[serde(default)]
    pub apriori: Option<crate::geometry::AprioriData>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Experiment-specific settings.
    #[serde(default)]
    pub params: serde_json::Value,
}

fn default_resolution() -> usize {
    8
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 {
            return Err(Error::Config(format!("resolution must be at least 4, got {}", self.resolution)));
        }
        if let Some(name) = &self.experiment {
            if !EXPERIMENTS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown experiment `{name}`")));
            }
        }
        for (k, v) in &self.tolerances {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("tolerance `{k}` must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    /// Experiment parameters, defaults filled in; unknown keys are
    /// configuration errors.
    pub fn params<P: for<'de> Deserialize<'de> + Default>(&self) -> Result<P> {
        if self.params.is_null() {
            return Ok(P::default());
        }
        serde_json::from_value(self.params.clone()).map_err(|e| Error::Config(format!("params: {e}")))
    }

    pub fn conductivity_spec(&self, n_layers: usize) -> ConductivitySpec {
        self.conductivity.clone().unwrap_or_else(|| ConductivitySpec {
            gamma: vec![1.0; n_layers],
            gamma_bar: 0.1,
            field: "identity".into(),
            params: serde_json::Value::Null,
        })
    }
}

/// A table cell: numbers are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.fract() == 0.0 && v.abs() < 1e15 => format!("{v:.0}"),
            Cell::Num(v) => format!("{v:e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn parse(s: &str) -> Self {
        match s.parse::<f64>() {
            Ok(v) => Cell::Num(v),
            Err(_) => Cell::Text(s.to_string()),
        }
    }
}

/// Rows of an experiment, the source of truth for its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, col: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == col).ok_or_else(|| Error::InvalidArgument(format!("no column `{col}`")))
    }

    pub fn num(&self, row: usize, col: &str) -> Result<f64> {
        match &self.rows[row][self.index(col)?] {
            Cell::Num(v) => Ok(*v),
            Cell::Text(t) => Err(Error::InvalidArgument(format!("column `{col}` holds text `{t}`"))),
        }
    }

    pub fn text(&self, row: usize, col: &str) -> Result<String> {
        Ok(self.rows[row][self.index(col)?].render())
    }

    /// Row indices whose `col` equals `value`.
    pub fn select(&self, col: &str, value: &str) -> Result<Vec<usize>> {
        let i = self.index(col)?;
        Ok((0..self.len()).filter(|&r| self.rows[r][i].render() == value).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let columns = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(rec.map_err(csv_err)?.iter().map(Cell::parse).collect());
        }
        Ok(Self { columns, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() }
}

/// A tolerance check. Non-asserted checks are reported only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub relation: String,
    pub bound: Option<f64>,
    pub asserted: bool,
    pub pass: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value: finite(value), relation: "<=".into(), bound: finite(bound), asserted: true, pass: value <= bound }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value: finite(value), relation: ">=".into(), bound: finite(bound), asserted: true, pass: value >= bound }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: None, relation: "holds".into(), bound: None, asserted: true, pass: ok }
    }

    pub fn report(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub rows: usize,
    pub stats: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl Summary {
    pub fn new(experiment: &str, rows: usize) -> Self {
        Self { experiment: experiment.into(), rows, stats: BTreeMap::new(), checks: Vec::new(), notes: Vec::new(), pass: true }
    }

    pub fn stat(&mut self, key: &str, v: impl Serialize) {
        self.stats.insert(key.into(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| !c.asserted || c.pass);
        self
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.asserted && !c.pass).collect()
    }
}

/// Extra files written next to the rows and summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub summary: Summary,
    pub artifacts: Vec<Artifact>,
}

/// Least-squares slope and intercept of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// `(slope, intercept)` of the least-squares line.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Drops the first and last point when at least four remain.
pub fn middle_window<T: Clone>(v: &[T]) -> Vec<T> {
    if v.len() >= 4 {
        v[1..v.len() - 1].to_vec()
    } else {
        v.to_vec()
    }
}

/// Log-log slope over the middle window.
pub fn window_slope(x: &[f64], y: &[f64]) -> f64 {
    loglog_fit(&middle_window(x), &middle_window(y)).0
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn canonical(name: &str) -> Result<&'static str> {
    EXPERIMENTS
        .iter()
        .find(|e| **e == name)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown experiment `{name}`; expected one of {}", EXPERIMENTS.join(", "))))
}

/// Runs an experiment and summarizes its rows.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Outcome> {
    let name = canonical(name)?;
    cfg.validate()?;
    let (table, artifacts) = match name {
        "asymptotics" => asymptotics::run(cfg)?,
        "stability-sweep" => sweep::run(cfg)?,
        "su-decay" => su_decay::run(cfg)?,
        "kernel-checks" => kernel_checks::run(cfg)?,
        "budget" => budget::run(cfg)?,
        _ => mesh_gen::run(cfg)?,
    };
    let summary = summarize(name, cfg, &table)?;
    Ok(Outcome { table, summary, artifacts })
}

/// Summary of an experiment's rows; a pure function of rows and config.
pub fn summarize(name: &str, cfg: &ExperimentConfig, table: &Table) -> Result<Summary> {
    let name = canonical(name)?;
    let s = match name {
        "asymptotics" => asymptotics::summarize(cfg, table)?,
        "stability-sweep" => sweep::summarize(cfg, table)?,
        "su-decay" => su_decay::summarize(cfg, table)?,
        "kernel-checks" => kernel_checks::summarize(cfg, table)?,
        "budget" => budget::summarize(cfg, table)?,
        _ => mesh_gen::summarize(cfg, table)?,
    };
    Ok(s.finish())
}

pub fn rows_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.rows.csv"))
}

pub fn summary_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.summary.json"))
}

/// Writes rows, summary and artifacts into `dir`.
pub fn write_outcome(dir: &Path, name: &str, out: &Outcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    out.table.write_csv(&mut rows)?;
    fs::write(rows_path(dir, name), rows)?;
    let mut json = serde_json::to_vec_pretty(&out.summary)?;
    json.push(b'\n');
    fs::write(summary_path(dir, name), json)?;
    for a in &out.artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

/// Re-reads the written rows and checks that they reproduce the written
/// summary.
pub fn resummarize(dir: &Path, name: &str, cfg: &ExperimentConfig) -> Result<bool> {
    let table = Table::read_csv(fs::File::open(rows_path(dir, name))?)?;
    let stored: serde_json::Value = serde_json::from_slice(&fs::read(summary_path(dir, name))?)?;
    let again = serde_json::to_value(summarize(name, cfg, &table)?)?;
    Ok(stored == again)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_exact() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![0.1.into(), "x".into(), f64::INFINITY.into()]);
        t.push(vec![(1.0 / 3.0).into(), true.into(), 1e-300.into()]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.select("b", "true").unwrap(), vec![1]);
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        let (s, i) = loglog_fit(&x, &y);
        assert!((s + 1.5).abs() < 1e-12 && (i - 3f64.ln()).abs() < 1e-12);
        assert!((window_slope(&x, &y) + 1.5).abs() < 1e-12);
        assert_eq!(middle_window(&x).len(), 3);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg.resolution, 8);
        assert_eq!(cfg.partition.build().unwrap().n_subdomains(), 2);
        assert!(matches!(ExperimentConfig::from_json(r#"{"resolution": 2}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(run("nope", &cfg), Err(Error::Config(_))));
        let spec = r#"{"partition": {"interfaces": [0.3, {"profile": {"kind": "flat"}, "anchor": [0.5, 0.5, 0.7], "r0": 0.5, "m": 0.125, "alpha": 1.0}]}}"#;
        let cfg = ExperimentConfig::from_json(spec).unwrap();
        let p = cfg.partition.build().unwrap();
        assert_eq!(p.n_subdomains(), 3);
        assert_eq!(p.interfaces[1].m, 0.125);
    }
}
