use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simmax_harness::commands::{self, Workspace};
use simmax_harness::{ExperimentConfig, HarnessError, Preset, Result};

/// Noisy sim-max signaling games against the Information Bottleneck bound.
#[derive(Debug, Parser)]
#[command(name = "simmax", version)]
struct Cli {
    /// TOML file merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (overrides the config).
    #[arg(long, global = true, env = "SIMMAX_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the IB bound and write it to <output>/bound.
    IbBound,
    /// Run the imitation dynamic for one (gamma, seed) pair.
    Simulate {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Bound, every (gamma, seed) run, baselines and analysis.
    Sweep,
    /// Permutation and NK99 baselines for the converged runs in <output>.
    Baselines,
    /// Aggregate the runs and baselines found in a sweep directory.
    Analyze { dir: PathBuf },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let config = ExperimentConfig::load(cli.preset, cli.config.as_deref())?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    if let Command::Analyze { dir } = &cli.command {
        let summary = commands::analyze(dir)?;
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        return Ok(());
    }
    let ws = Workspace::new(config, cli.output, cli.workers)?;
    match cli.command {
        Command::IbBound => {
            let bound = commands::ib_bound(&ws)?;
            println!(
                "{} points, ceiling {} bits -> {}",
                bound.curve.points.len(),
                bound.curve.ceiling,
                ws.out.join("bound").display()
            );
        }
        Command::Simulate { gamma, seed } => {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(HarnessError::Config(format!("gamma must be finite and >= 0, got {gamma}")));
            }
            let bound = commands::ensure_bound(&ws)?;
            let run = commands::simulate_run(&ws, &bound, gamma, seed)?;
            println!(
                "{}: converged={} steps={} complexity={} accuracy={} epsilon={}",
                run.label,
                run.converged,
                run.steps,
                run.evaluation.complexity,
                run.evaluation.accuracy,
                run.evaluation.epsilon
            );
        }
        Command::Sweep => {
            let summary = commands::sweep(&ws)?;
            let total = summary.runs.len() + summary.failures.len();
            println!("{} runs, {} failed -> {}", total, summary.failures.len(), ws.out.display());
            if !summary.failures.is_empty() {
                return Err(HarnessError::PartialFailure {
                    failed: summary.failures.len(),
                    total,
                });
            }
        }
        Command::Baselines => {
            let bound = commands::ensure_bound(&ws)?;
            let b = commands::baselines(&ws, &bound)?;
            println!("{} permutations, {} NK99 runs", b.permutations, b.nk99_runs);
        }
        Command::Analyze { .. } | Command::ShowConfig => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simmax: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
