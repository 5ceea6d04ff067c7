//! Messages needed to reach a fixed accuracy as the network grows, with the
//! edge count scaling linearly in the number of nodes.

use sdd_newton::baselines::{run_baseline, Baseline, BaselineConfig};
use sdd_newton::graph::generate_random_graph;
use sdd_newton::newton::{run, NewtonConfig};
use sdd_newton::problems::{build_regression, generate_synthetic_regression};
use sdd_newton::sim::MessageUnit;

fn main() -> sdd_newton::Result<()> {
    let tol = 1e-6;
    println!("{:>4} {:>5} {:>14} {:>14}", "n", "|E|", "newton", "admm");
    for n in [10, 20, 40] {
        let m = 2 * n;
        let g = generate_random_graph(n, m, n as u64)?;
        let data = generate_synthetic_regression(n, 4, 10 * n, 1.0, n as u64)?;
        let inst = build_regression(g, &data.nodes, 0.05)?;
        let f_star = inst.centralized_optimum().expect("optimum").objective;

        let newton = run(&inst, &NewtonConfig::default(), MessageUnit::Scalar)?.trace;
        let admm = run_baseline(
            &inst,
            Baseline::Admm,
            &BaselineConfig { beta: 3.0, max_iters: 5000, target_gap: None },
            MessageUnit::Scalar,
        )?;
        let msgs = |t: &sdd_newton::sim::RunTrace| {
            t.first_within_gap(f_star, tol).map_or("-".to_string(), |r| r.messages_cumulative.to_string())
        };
        println!("{n:>4} {m:>5} {:>14} {:>14}", msgs(&newton), msgs(&admm));
    }
    Ok(())
}
