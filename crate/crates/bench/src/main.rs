use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use valphase_bench::{compare, format_report, load_config, read_summary, run_experiment, BenchError, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "valphase-bench", version, about = "Latency-breakdown benchmarks for the validation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print per-cell ratios between two summary files (b relative to a).
    Compare { a: PathBuf, b: PathBuf },
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config } => {
            let mut spec = load_config(&config)?;
            if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
                spec.redirect_output(&PathBuf::from(dir));
            }
            let result = run_experiment(&spec, |c| {
                let status = c.error.as_deref().unwrap_or("ok");
                eprintln!(
                    "{} {} workers={} block_size={}: {:.1} tx/s, total {:.0} us/block [{status}]",
                    c.mode,
                    c.backend,
                    c.workers,
                    c.block_size,
                    c.throughput.mean,
                    c.metric("total_us").mean
                );
            })?;
            println!("{}", result.csv.display());
            println!("{}", result.summary_path.display());
            match result.failed_cells() {
                0 => Ok(()),
                n => Err(BenchError::CellsFailed(n)),
            }
        }
        Command::Compare { a, b } => {
            let ratios = compare(&read_summary(&a)?, &read_summary(&b)?)?;
            print!("{}", format_report(&ratios));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
