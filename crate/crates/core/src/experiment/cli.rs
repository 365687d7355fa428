use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::commands;
use super::config::ExperimentConfig;
use super::io::read_plain;
use crate::error::{Error, Result};
use crate::solver::Mode;

#[derive(Debug, Parser)]
#[command(name = "dglasso", version, about = "Sparse state-space estimation")]
pub struct Cli {
    /// JSON experiment configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for grid and benchmark runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a ground truth and training/test series.
    Generate,
    /// Fit a model to the training series of a generated dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        lambda_a: Option<f64>,
        #[arg(long)]
        lambda_p: Option<f64>,
    },
    /// Score a fit against the truth and test series.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fit: PathBuf,
    },
    /// Grid search over the penalty pair.
    Grid,
    /// Compare all methods across the preset datasets.
    Benchmark,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = read_plain(path)?;
            ExperimentConfig::from_json(&text).map_err(|e| match e {
                Error::Json(inner) => Error::Parse {
                    path: path.display().to_string(),
                    msg: inner.to_string(),
                },
                other => other,
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.display().to_string();
    }
    if let Command::Fit {
        mode,
        lambda_a,
        lambda_p,
        ..
    } = &cli.command
    {
        if let Some(m) = mode {
            cfg.solver.mode = *m;
        }
        if let Some(l) = lambda_a {
            cfg.solver.lambda_a = *l;
        }
        if let Some(l) = lambda_p {
            cfg.solver.lambda_p = *l;
        }
    }
    if matches!(cli.command, Command::Grid) && cfg.grid.is_none() {
        cfg.grid = Some(Default::default());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = Path::new(&cfg.output_dir);
    commands::with_pool(cli.jobs, || -> Result<()> {
        match &cli.command {
            Command::Generate => {
                commands::generate(&cfg, out)?;
            }
            Command::Fit { data, .. } => {
                let res = commands::fit_dir(&cfg, data, out)?;
                log::info!(
                    "fit: {} outer iterations, final loss {:?}",
                    res.outer_iterations,
                    res.loss_trace.last()
                );
            }
            Command::Eval { data, fit } => {
                let report = commands::eval_dirs(&cfg, data, fit, out)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Command::Grid => {
                let res = commands::grid_cmd(&cfg, out)?;
                if let Some(best) = res.best_cell() {
                    println!("best: lambda_a={} lambda_p={}", best.lambda_a, best.lambda_p);
                }
            }
            Command::Benchmark => {
                let rows = commands::benchmark_cmd(&cfg, out)?;
                print!("{}", commands::benchmark_markdown(&rows));
            }
        }
        Ok(())
    })?
}

/// Exit code for a finished command.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_solver_failure() => 1,
        Err(_) => 2,
    }
}

pub fn run_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
