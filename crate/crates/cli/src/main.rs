use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smf_cli::{config, run};
use smf_core::Error;

/// Structured matrix factorization experiments: fit, sweep, plot-data.
#[derive(Parser)]
#[command(name = "smf", version, about)]
struct Cli {
    /// Worker threads for sweep cells (default: all cores). The SMF_THREADS
    /// environment variable overrides this flag.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single fit from a JSON config and report a JSON summary.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the summary output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a (rho, phi, trial) sweep and write record + aggregate CSVs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Records CSV path (aggregate goes to <out>.agg.csv). Overrides the
        /// config output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert an aggregate CSV into plot-ready series data.
    PlotData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn threads_from(cli_threads: Option<usize>) -> Option<usize> {
    match std::env::var("SMF_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).or(cli_threads),
        Err(_) => cli_threads,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = threads_from(cli.threads);
    let result = match cli.command {
        Command::Fit { config, seed, out } => run_fit_cmd(&config, seed, out),
        Command::Sweep { config, out, seed } => run_sweep_cmd(&config, out, seed, threads),
        Command::PlotData { input, out } => {
            run::emit_plot_data(&input, &out).map(|rows| {
                eprintln!("wrote {} series rows to {}", rows, out.display());
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run_fit_cmd(path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> smf_core::Result<()> {
    let mut cfg: config::FitConfig = config::load_json(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.output = out;
    }
    let summary = run::run_fit(&cfg)?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Io(format!("summary serialization: {e}")))?;
    println!("{json}");
    Ok(())
}

fn run_sweep_cmd(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> smf_core::Result<()> {
    let mut cfg: config::SweepConfig = config::load_json(path)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    let out_path = out
        .or_else(|| cfg.output_path.clone())
        .ok_or_else(|| Error::invalid("no output path: pass --out or set output_path"))?;
    let records = run::run_sweep(&cfg, threads)?;
    run::write_sweep_csv(&out_path, &records)?;
    let agg = run::aggregate(&records);
    let agg_path = run::aggregate_path(&out_path);
    run::write_aggregate_csv(&agg_path, &agg)?;
    let failed = records.iter().filter(|r| r.status != "ok").count();
    eprintln!(
        "wrote {} records to {} ({} failed cells), aggregate to {}",
        records.len(),
        out_path.display(),
        failed,
        agg_path.display()
    );
    Ok(())
}
