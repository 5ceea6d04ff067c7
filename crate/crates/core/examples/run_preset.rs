//! Runs a built-in experiment through the library API and writes its traces
//! to a directory (default `runs/`).
//!
//! ```text
//! cargo run --release --example run_preset -- logistic-l2-small /tmp/runs
//! ```

use sdd_newton::experiment::{preset, run_experiment, RunOptions};

fn main() -> sdd_newton::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "synthetic-regression-small".into());
    let out = args.next().map(Into::into);

    let cfg = preset(&name)?;
    let outcome = run_experiment(&cfg, &RunOptions { out_dir: out, quick: true, ..RunOptions::default() })?;
    print!("{}", outcome.summary.table());
    if let Some(dir) = outcome.out_dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}
