// Several agents fit a shared linear policy from their own reward-weighted
// trajectories. The consensus solution matches pooling every trajectory.

use sdd_newton::consensus::split_nodes;
use sdd_newton::graph::Graph;
use sdd_newton::newton::{run, NewtonConfig};
use sdd_newton::problems::{build_rl, generate_synthetic_rl};
use sdd_newton::sim::MessageUnit;

fn main() -> sdd_newton::Result<()> {
    let (agents, p) = (8, 4);
    let trajectories = generate_synthetic_rl(agents, p, 12, 20, 2)?;
    let inst = build_rl(Graph::cycle(agents)?, &trajectories, 0.05)?;

    let report = run(&inst, &NewtonConfig::default(), MessageUnit::Vector)?;
    let policies = split_nodes(&report.state.y, agents, p);
    let pooled = &inst.centralized_optimum().expect("quadratic").theta;

    println!("step size {:.2}, {} iterations", report.alpha, report.trace.iterations());
    for (i, w) in policies.iter().enumerate() {
        println!("agent {i}: {:.5?}  (off by {:.1e})", w.as_slice(), (w - pooled).amax());
    }
    Ok(())
}
