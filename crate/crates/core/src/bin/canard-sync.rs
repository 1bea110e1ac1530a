use std::path::PathBuf;
use std::process::ExitCode;

use canard_sync::harness::{
    emit_plot_data, run_through, sweep_k, sweep_spread, ExperimentConfig, PlotKind, RunArtifact, Stage,
    SweepParameter,
};
use canard_sync::Error;
use clap::{Args, Parser, Subcommand};

/// Coupled three-time-scale oscillator networks: geometry, linger times and
/// synchronization checks.
#[derive(Parser)]
#[command(name = "canard-sync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON experiment file; the shipped reference config when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coupling strength.
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the coupled network over the synchronization window.
    Simulate(Common),
    /// Fast and slow manifold charts.
    Manifold(Common),
    /// Linger times of every oscillator.
    Linger(Common),
    /// Full pipeline with the threshold check.
    Verify(Common),
    /// Verified runs over a grid of k (or of spread, per the config).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid, e.g. `0,1,10,100`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Plot-ready CSV: sync_trace, phase_diagram or manifold_slice.
    PlotData {
        kind: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(s) = c.seed {
        config.model.seed = s;
    }
    if let Some(o) = &c.out {
        config.output_dir = o.clone();
    }
    if let Some(k) = c.k {
        config.network.k = k;
    }
    config.validate()?;
    Ok(config)
}

fn sweep(config: &ExperimentConfig, grid: Option<Vec<f64>>) -> Result<RunArtifact, Error> {
    let (parameter, grid) = match (grid, &config.sweep) {
        (Some(g), s) => (s.as_ref().map_or(SweepParameter::K, |s| s.parameter), g),
        (None, Some(s)) => (s.parameter, s.grid.clone()),
        (None, None) => return Err(Error::Argument("no sweep grid: pass --grid or add a [sweep] block".into())),
    };
    match parameter {
        SweepParameter::K => sweep_k(config, &grid),
        SweepParameter::Spread => sweep_spread(config, &grid),
    }
}

fn summary(a: &RunArtifact) {
    if let Some(l) = &a.linger {
        print!("{}", l.table());
    }
    if let Some(v) = &a.verification {
        println!(
            "k = {}  k* = {:.6}  V_v(delta t_min) = {:.3e}  V_v(t_min) = {:.3e}  verdict = {:?}",
            v.k, v.k_star, v.v_at_delta_t_min, v.v_at_t_min, v.verdict
        );
    }
    if let Some(s) = &a.sweep {
        print!("{}", s.to_csv());
        if let Some(k) = s.k_star {
            println!("k* = {k:.6}  k_empirical = {:?}", s.k_empirical());
        }
    }
    println!("output: {}", a.dir.display());
}

fn run(cli: Cli) -> Result<bool, Error> {
    let through = |c: &Common, stage| -> Result<RunArtifact, Error> { run_through(&load(c)?, stage) };
    let artifact = match cli.command {
        Command::Simulate(c) => through(&c, Stage::Simulate)?,
        Command::Manifold(c) => through(&c, Stage::Sections)?,
        Command::Linger(c) => through(&c, Stage::Linger)?,
        Command::Verify(c) => through(&c, Stage::Verify)?,
        Command::Sweep { common, grid } => sweep(&load(&common)?, grid)?,
        Command::PlotData { kind, common, grid } => {
            let kind: PlotKind = kind.parse()?;
            let config = load(&common)?;
            let artifact = match kind {
                PlotKind::SyncTrace => run_through(&config, Stage::Verify)?,
                PlotKind::ManifoldSlice => run_through(&config, Stage::Manifold)?,
                PlotKind::PhaseDiagram => sweep(&config, grid)?,
            };
            let path = emit_plot_data(&artifact, kind)?;
            println!("{}", path.display());
            return Ok(true);
        }
    };
    summary(&artifact);
    Ok(artifact.verification.as_ref().is_none_or(|v| v.verdict != canard_sync::sync::Verdict::Invalid))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_assumption() { 2 } else { 1 })
        }
    }
}
