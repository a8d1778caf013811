use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use eitlab::lab::{self, ExperimentConfig, EXPERIMENTS};
use eitlab::Error;

/// Runs one verification experiment and writes `<experiment>.rows.csv` and
/// `<experiment>.summary.json`.
#[derive(Debug, Parser)]
#[command(name = "eitlab", version)]
struct Cli {
    /// One of: asymptotics, stability-sweep, su-decay, kernel-checks, budget, mesh-gen.
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the config's `out`, else the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
}

const EXIT_TOLERANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_TOLERANCE),
        Err(e @ Error::Config(_)) => {
            eprintln!("eitlab: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("eitlab: {e}");
            ExitCode::from(EXIT_TOLERANCE)
        }
    }
}

fn run(cli: &Cli) -> eitlab::Result<bool> {
    if !EXPERIMENTS.contains(&cli.experiment.as_str()) {
        return Err(Error::Config(format!("unknown experiment `{}`; expected one of {}", cli.experiment, EXPERIMENTS.join(", "))));
    }
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(name) = &cfg.experiment {
        if name != &cli.experiment {
            return Err(Error::Config(format!("config is for `{name}`, not `{}`", cli.experiment)));
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    cfg.validate()?;
    let dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));

    let outcome = lab::run(&cli.experiment, &cfg)?;
    lab::write_outcome(&dir, &cli.experiment, &outcome)?;
    if !lab::resummarize(&dir, &cli.experiment, &cfg)? {
        eprintln!("eitlab: summary is not reproduced from the written rows");
        return Ok(false);
    }
    for c in outcome.summary.failed_checks() {
        eprintln!("eitlab: {} failed: {:?} {} {:?}", c.name, c.value, c.relation, c.bound);
    }
    println!(
        "{}: {} ({} rows) -> {}",
        cli.experiment,
        if outcome.summary.pass { "pass" } else { "FAIL" },
        outcome.table.len(),
        lab::summary_path(&dir, &cli.experiment).display()
    );
    Ok(outcome.summary.pass)
}
