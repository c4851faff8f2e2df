//! `ampr`: theory sweeps, simulations, AMP runs, calibration and figure
//! recipes, written as CSV.

mod commands;
mod config;
mod figures;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ampr_core::{Error, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use figures::{FigureSettings, Recipe};
use output::{config_hash, provenance, write_table, Table};

#[derive(Parser)]
#[command(name = "ampr", version, about = "Risk theory and simulations for reference-panel lasso and ridge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Add a desk-scale Monte Carlo check to figure recipes.
    #[arg(long, global = true)]
    validate: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Theoretical risks over the configured grids.
    TheorySweep,
    /// Theory plus Monte Carlo risks over the configured grids.
    Simulate,
    /// AMP trajectories on one synthetic instance per spec.
    AmpRun,
    /// alpha <-> lambda calibration for the lasso estimators.
    Calibrate,
    /// Curves behind one of the figure recipes.
    Figure {
        #[arg(value_enum)]
        recipe: Recipe,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TheorySweep => "theory-sweep",
            Command::Simulate => "simulate",
            Command::AmpRun => "amp-run",
            Command::Calibrate => "calibrate",
            Command::Figure { recipe } => recipe.name(),
        }
    }
}

fn load(cli: &Cli) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_str(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(Some(cfg))
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    if cli.validate && !matches!(cli.command, Command::Figure { .. }) {
        return Err(Error::ConfigParse("--validate applies to figure recipes only".into()));
    }
    let (tables, seed, canonical): (Vec<Table>, u64, String) = match cli.command {
        Command::Figure { recipe } => {
            let s = FigureSettings {
                lambdas: cfg.as_ref().map(|c| c.lambdas.clone()).unwrap_or_default(),
                alphas: cfg.as_ref().map(|c| c.alphas.clone()).unwrap_or_default(),
                validate: cli.validate,
                p: cfg.as_ref().map_or(1000, |c| c.p),
                reps: cfg.as_ref().map_or(20, |c| c.reps),
                seed: cfg.as_ref().map_or(cli.seed.unwrap_or(1), |c| c.seed),
            };
            let canonical = format!("validate = {}\n{}", s.validate, cfg.as_ref().map_or("", |c| c.canonical.as_str()));
            (vec![figures::run(recipe, &s)?], s.seed, canonical)
        }
        cmd => {
            let cfg = cfg.ok_or_else(|| Error::ConfigParse(format!("{} needs --config", cmd.name())))?;
            let tables = match cmd {
                Command::TheorySweep => commands::theory_sweep(&cfg)?,
                Command::Simulate => commands::simulate(&cfg)?,
                Command::AmpRun => commands::amp_run(&cfg)?,
                Command::Calibrate => commands::calibrate(&cfg)?,
                Command::Figure { .. } => unreachable!(),
            };
            (tables, cfg.seed, cfg.canonical.clone())
        }
    };
    let hash = config_hash(&format!("command = {}\n{canonical}", cli.command.name()));
    write_all(&cli.out, &tables, &provenance(&hash, seed))
}

fn write_all(dir: &Path, tables: &[Table], prov: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for t in tables {
        write_table(dir, t, prov)?;
        eprintln!("wrote {} ({} rows)", dir.join(&t.name).display(), t.rows.len());
    }
    Ok(())
}

/// 2 for configuration and output problems, 3 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigParse(_)
        | Error::InvalidSpec(_)
        | Error::InvalidPrior(_)
        | Error::InvalidCovariance(_)
        | Error::HeritabilityOutOfRange(_)
        | Error::DimensionTooSmall(_)
        | Error::Unsupported(_)
        | Error::Io(_) => 2,
        Error::Replicate { source, .. } => exit_code(source),
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
