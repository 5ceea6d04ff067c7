//! Newton against ADMM, network averaging and the distributed subgradient
//! method on one regression instance. Iterations and messages are counted
//! until the objective gap stays below the tolerance.

use sdd_newton::baselines::{run_baseline, Baseline, BaselineConfig};
use sdd_newton::graph::generate_random_graph;
use sdd_newton::newton::{run, NewtonConfig};
use sdd_newton::problems::{build_regression, generate_synthetic_regression};
use sdd_newton::sim::{MessageUnit, RunTrace};

const TOL: f64 = 1e-4;

fn report(trace: &RunTrace, f_star: f64) {
    let last = trace.last().expect("non-empty trace");
    match trace.first_within_gap(f_star, TOL) {
        Some(r) => println!("{:<12} {:>7} iters {:>10} messages", trace.meta.algorithm, r.iter, r.messages_cumulative),
        None => println!(
            "{:<12} not within {TOL:e} after {} iters (gap {:.2e})",
            trace.meta.algorithm,
            trace.iterations(),
            ((last.objective - f_star) / f_star).abs()
        ),
    }
}

fn main() -> sdd_newton::Result<()> {
    let g = generate_random_graph(20, 40, 11)?;
    let data = generate_synthetic_regression(20, 5, 200, 1.0, 11)?;
    let inst = build_regression(g, &data.nodes, 0.05)?;
    let f_star = inst.centralized_optimum().expect("regression optimum").objective;
    let unit = MessageUnit::Vector;

    report(&run(&inst, &NewtonConfig::default(), unit)?.trace, f_star);
    for (algo, beta, iters) in [
        (Baseline::Admm, 3.0, 2000),
        (Baseline::Averaging, 2e-5, 30000),
        (Baseline::Subgradient, 2e-5, 30000),
    ] {
        let cfg = BaselineConfig { beta, max_iters: iters, target_gap: None };
        report(&run_baseline(&inst, algo, &cfg, unit)?, f_star);
    }
    Ok(())
}
