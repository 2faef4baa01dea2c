use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use lasso_phase_cli::{init_workers, parse_config, parse_p_grid, run, Command, Overrides};

/// Phase transitions and risk of the LASSO under correlated Gaussian designs.
#[derive(Debug, Parser)]
#[command(name = "lasso-phase", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N", env = "LASSO_PHASE_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Comma-separated dimensions for the Monte-Carlo extrapolation.
    #[arg(long, global = true, value_name = "LIST", value_parser = |s: &str| parse_p_grid(s).map(PGrid).map_err(|e| e.message))]
    p_grid: Option<PGrid>,

    /// Replicates per dimension.
    #[arg(long, global = true, value_name = "N")]
    replicates: Option<usize>,
}

#[derive(Debug, Clone)]
struct PGrid(Vec<usize>);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(flags) if flags.is_empty() => ExitCode::SUCCESS,
        Ok(flags) => {
            eprintln!("finished with {} flagged problem(s):", flags.len());
            for f in flags {
                eprintln!("  {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<Vec<String>> {
    let path = cli.config.context("--config is required")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text)?;
    cfg.apply(&Overrides {
        command: cli.command,
        seed: cli.seed,
        out: cli.out,
        p_grid: cli.p_grid.map(|g| g.0),
        replicates: cli.replicates,
    });
    init_workers(cli.workers);
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let outcome = run(&cfg, &base)?;
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(outcome.flags)
}
