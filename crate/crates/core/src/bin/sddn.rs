use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdd_newton::experiment::{preset, run_experiment, ExperimentConfig, Outcome, RunOptions, OUT_DIR_ENV, PRESETS};
use sdd_newton::sim::MessageUnit;
use sdd_newton::verify::{verify, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "sddn", version, about = "Distributed SDD-Newton consensus optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Base random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["scalar", "vector"])]
    message_unit: Option<String>,
    /// Cap every algorithm at 200 iterations.
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in experiment (`list` prints the names).
    Preset {
        name: String,
        /// Print the preset's config instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check numerical properties against dense oracles.
    Verify {
        #[arg(value_parser = ["sdd", "dual", "newton", "all"])]
        suite: String,
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn options(o: &Overrides) -> RunOptions {
    RunOptions {
        out_dir: o.out.clone(),
        seed: o.seed,
        message_unit: o.message_unit.as_deref().map(|u| u.parse::<MessageUnit>().expect("validated by clap")),
        quick: o.quick,
        dry: false,
    }
}

fn report(outcome: &Outcome) -> ExitCode {
    let s = &outcome.summary;
    print!("{}", s.table());
    for note in &s.notes {
        eprintln!("warning: {note}");
    }
    for r in s.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("error: {} failed: {}", r.file_stem, r.error.as_deref().unwrap_or_default());
    }
    if let Some(dir) = &outcome.out_dir {
        println!("traces written to {}", dir.display());
    }
    if s.all_completed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn execute(cli: Cli) -> sdd_newton::Result<ExitCode> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(report(&run_experiment(&cfg, &options(&overrides))?))
        }
        Command::Preset { name, print, overrides } => {
            if name == "list" {
                PRESETS.iter().for_each(|p| println!("{p}"));
                return Ok(ExitCode::SUCCESS);
            }
            let cfg = preset(&name)?;
            if print {
                println!("{}", cfg.to_json()?);
                return Ok(ExitCode::SUCCESS);
            }
            Ok(report(&run_experiment(&cfg, &options(&overrides))?))
        }
        Command::Verify { suite, quick, seed, inject_fault } => {
            let suite: Suite = suite.parse()?;
            let rep = verify(suite, &VerifyOptions { quick, inject_fault, seed })?;
            println!("{rep}");
            Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
