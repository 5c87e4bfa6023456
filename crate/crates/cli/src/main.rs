use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aact::config::{parse_config, Scenario};
use aact::scenario::{run_scenario, run_sweep, Execution};
use clap::{Args, Parser, Subcommand};

/// Application-aware cooperative time allocation simulator.
#[derive(Parser)]
#[command(name = "aact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write the per-slot CSV and summary JSON.
    Run(Common),
    /// Run the scenario's [sweep] section and write aggregate and per-run CSVs.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn load(args: &Common) -> Result<Scenario, ExitCode> {
    let mut scenario = parse_config(&args.config).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    if let Some(seed) = args.seed {
        scenario.config.sim.seed = seed;
    }
    Ok(scenario)
}

fn echo(path: &Path) {
    println!("{}", path.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, sweep) = match &cli.command {
        Command::Run(a) => (a, false),
        Command::Sweep(a) => (a, true),
    };
    let scenario = match load(args) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if sweep && scenario.config.sweep.is_none() {
        eprintln!("error: config error at `sweep`: section required for a sweep");
        return ExitCode::from(1);
    }
    let outcome = if sweep {
        let execution = Execution::Parallel { workers: args.workers };
        run_sweep(&scenario, &args.out_dir, execution).map(|out| {
            echo(&out.aggregate_csv);
            echo(&out.runs_csv);
        })
    } else {
        run_scenario(&scenario, &args.out_dir).map(|out| {
            echo(&out.slots_csv);
            echo(&out.summary_json);
        })
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
