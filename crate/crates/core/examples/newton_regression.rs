//! Distributed Newton on the synthetic regression preset's instance,
//! printing the phase of every iteration and the messages it cost.

use sdd_newton::consensus::compute_constants;
use sdd_newton::experiment::preset;
use sdd_newton::newton::{run, NewtonConfig, StepMode};
use sdd_newton::sim::{relative_gap, MessageUnit};

fn main() -> sdd_newton::Result<()> {
    let inst = preset("synthetic-regression-small")?.build_instance()?;
    let s = inst.spectral();
    println!("n = {}, p = {}, μ₂ = {:.3}, μ_n = {:.3}", inst.n(), inst.p(), s.mu2, s.mu_n);

    let c = compute_constants(&inst, 0.1)?;
    println!("theorem step α* = {:.3e}, admissible accuracy: {}", c.alpha_star, c.admissible);

    let cfg = NewtonConfig { step_mode: StepMode::Fixed { alpha: 1.0 }, ..NewtonConfig::default() };
    let report = run(&inst, &cfg, MessageUnit::Vector)?;
    let f_star = inst.centralized_optimum().map(|o| o.objective).unwrap_or(f64::NAN);

    println!("{:>4} {:>12} {:>11} {:>11} {:>16} {:>10}", "iter", "gap", "consensus", "‖g‖_M", "phase", "messages");
    for r in &report.trace.rows {
        println!(
            "{:>4} {:>12.3e} {:>11.3e} {:>11.3e} {:>16} {:>10}",
            r.iter,
            relative_gap(r.objective, f_star),
            r.consensus_error,
            r.grad_mnorm.unwrap_or(f64::NAN),
            r.phase.map(|p| p.to_string()).unwrap_or_default(),
            r.messages_cumulative
        );
    }
    println!("converged: {}", report.trace.meta.converged);
    Ok(())
}
