use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simcf::experiment::{parse_plan, run_plan, write_summary, RunOptions};

#[derive(Parser)]
#[command(
    name = "simcf",
    version,
    about = "Monte-Carlo sweeps of SIM-aided cell-free massive MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep value, scheme and trial of a plan.
    Run {
        plan: PathBuf,
        /// Output directory, overriding `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed, overriding the plan's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Write one convergence trace per run.
        #[arg(long)]
        trace: bool,
    },
    /// Parse and check a plan without running it.
    Validate { plan: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> simcf::Result<()> {
    match cli.command {
        Command::Validate { plan } => {
            let p = parse_plan(&plan)?;
            println!(
                "{}: ok ({} = {:?}, {} schemes, {} trials, {} rows)",
                plan.display(),
                p.sweep.axis,
                p.sweep.values,
                p.schemes.len(),
                p.trials,
                p.cardinality()
            );
            Ok(())
        }
        Command::Run {
            plan,
            out,
            seed,
            workers,
            trace,
        } => {
            let mut p = parse_plan(&plan)?;
            if let Some(s) = seed {
                p.seed = s;
            }
            let mut opts = RunOptions::from_plan(&p);
            if let Some(dir) = out {
                opts.out = Some(dir);
            }
            opts.workers = workers;
            opts.trace |= trace;
            let table = run_plan(&p, &opts)?;
            let mut stdout = std::io::stdout().lock();
            write_summary(&table, p.sweep.axis.as_str(), &mut stdout)?;
            if !table.errors.is_empty() {
                eprintln!("{} runs failed; see errors.csv", table.errors.len());
            }
            if let Some(dir) = &opts.out {
                println!("wrote {}", dir.join("results.csv").display());
            }
            Ok(())
        }
    }
}
