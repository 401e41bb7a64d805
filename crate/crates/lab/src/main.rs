use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtrl_lab::config::ExperimentConfig;
use mtrl_lab::diagnostics::diagnostics_experiment;
use mtrl_lab::error::{LabError, Result};
use mtrl_lab::experiment::{containment_monte_carlo, eluder_experiment, run_experiment, run_sweep};
use mtrl_lab::output::{write_containment, write_diagnostics, write_eluder, write_summary, write_svg, write_trace};
use mtrl_lab::Kind;

/// Multitask representation learning simulator.
#[derive(Parser)]
#[command(name = "mtrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment (dispatches on `kind`).
    Run(Common),
    /// Run every point of the `[sweep]` grid.
    Sweep(Common),
    /// Monte Carlo frequency of runs whose confidence sets always contain the truth.
    Containment(Common),
    /// Exhaustive and greedy eluder dimensions of the `[eluder]` class.
    Eluder(Common),
    /// Bonus-versus-error and category-kernel diagnostics.
    Diagnostics(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the configured base seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config; default `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Write plot.svg (default).
    #[arg(long, overrides_with = "no_svg")]
    svg: bool,
    /// Skip plot.svg.
    #[arg(long, overrides_with = "svg")]
    no_svg: bool,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.workers == 0 {
            return Err(LabError::Config("--workers must be at least 1".into()));
        }
        let dir = self.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).map_err(|source| LabError::Io { path: dir.clone(), source })?;
        Ok((cfg, dir))
    }
}

fn regret_artifacts(cfg: &ExperimentConfig, c: &Common, dir: &Path, sweep: bool) -> Result<Vec<PathBuf>> {
    let out = if sweep { run_sweep(cfg, c.workers)? } else { run_experiment(cfg, c.workers)? };
    let mut written = vec![dir.join("trace.csv"), dir.join("summary.csv")];
    write_trace(&written[0], &out)?;
    write_summary(&written[1], &out)?;
    if !c.no_svg {
        let path = dir.join("plot.svg");
        write_svg(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}

fn eluder_artifacts(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("summary.csv");
    write_eluder(&path, &eluder_experiment(cfg)?)?;
    Ok(vec![path])
}

fn diagnostics_artifacts(cfg: &ExperimentConfig, c: &Common, dir: &Path) -> Result<Vec<PathBuf>> {
    write_diagnostics(dir, &diagnostics_experiment(cfg, c.workers)?)?;
    Ok(["summary.csv", "bonus.csv", "kernel.csv"].iter().map(|f| dir.join(f)).collect())
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, dir) = c.load()?;
            match cfg.kind {
                Kind::Eluder => eluder_artifacts(&cfg, &dir),
                Kind::Diagnostics => diagnostics_artifacts(&cfg, &c, &dir),
                _ => regret_artifacts(&cfg, &c, &dir, false),
            }
        }
        Command::Sweep(c) => {
            let (cfg, dir) = c.load()?;
            if matches!(cfg.kind, Kind::Eluder | Kind::Diagnostics) {
                return Err(LabError::Config("sweep applies to bandit, mdp and transfer experiments".into()));
            }
            regret_artifacts(&cfg, &c, &dir, true)
        }
        Command::Containment(c) => {
            let (cfg, dir) = c.load()?;
            let result = containment_monte_carlo(&cfg, cfg.runs, c.workers)?;
            let path = dir.join("summary.csv");
            write_containment(&path, cfg.tasks, cfg.horizon, &result)?;
            println!("contained {}/{} runs ({})", result.contained, result.runs, result.frequency());
            Ok(vec![path])
        }
        Command::Eluder(c) => {
            let (cfg, dir) = c.load()?;
            eluder_artifacts(&cfg, &dir)
        }
        Command::Diagnostics(c) => {
            let (cfg, dir) = c.load()?;
            diagnostics_artifacts(&cfg, &c, &dir)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
