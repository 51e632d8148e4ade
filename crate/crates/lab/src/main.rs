use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raspen::compare::{self, Tolerances};
use raspen::{ExperimentConfig, RunInfo};

#[derive(Parser)]
#[command(name = "raspen", version, about = "Nonlinear Schwarz preconditioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every combination of a config file.
    Run {
        config: Option<PathBuf>,
        #[arg(long = "config", conflicts_with = "config")]
        config_flag: Option<PathBuf>,
        /// Output directory; defaults to the config's `out` key, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the random-field seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare a results.csv with a reference table.
    Compare {
        results: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = 1)]
        outer_tol: usize,
        /// Relative LS tolerance.
        #[arg(long, default_value_t = 0.15)]
        ls_tol: f64,
    },
    /// Print the shipped reference tables.
    ReferenceTables,
}

fn run(cli: Cli) -> raspen::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            config_flag,
            out,
            seed,
            threads,
        } => {
            let path = config
                .or(config_flag)
                .ok_or_else(|| raspen::LabError::Config("no config file given".into()))?;
            let mut cfg = ExperimentConfig::from_file(&path)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let output = raspen::run_with_threads(&cfg, threads)?;
            let info = RunInfo {
                config_path: Some(path.display().to_string()),
                seed: cfg.seed(),
                threads,
            };
            raspen::write_outputs(&cfg, &output, &dir, &info)?;
            let failed = output.rows.iter().filter(|r| !r.converged).count();
            println!(
                "{} runs, {} converged, {} failed; results in {}",
                output.rows.len(),
                output.rows.len() - failed,
                failed,
                dir.display()
            );
            Ok(true)
        }
        Command::Compare {
            results,
            reference,
            outer_tol,
            ls_tol,
        } => {
            let tol = Tolerances { outer: outer_tol, ls: ls_tol };
            let report = compare::compare_files(&results, &reference, tol)?;
            print!("{}", report.render());
            let ok = report.count(compare::Verdict::Fail) == 0;
            Ok(ok)
        }
        Command::ReferenceTables => {
            print!("{}", compare::SHIPPED_REFERENCE);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
