//! The consensus dual on a small regression instance: the dual gradient is
//! `M y(λ)`, and the dual function is concave with the centralized optimum
//! as its maximum.

use nalgebra::DVector;
use sdd_newton::consensus::{dual_gradient, dual_value, m_norm, recover_primal, split_nodes, DualState};
use sdd_newton::graph::Graph;
use sdd_newton::problems::{build_regression, generate_synthetic_regression};

fn main() -> sdd_newton::Result<()> {
    let data = generate_synthetic_regression(5, 2, 50, 0.3, 3)?;
    let inst = build_regression(Graph::cycle(5)?, &data.nodes, 0.05)?;
    let (n, p) = (inst.n(), inst.p());

    let zero = DualState::zero(&inst)?;
    println!("at λ = 0 every node solves its own problem:");
    for (i, y) in split_nodes(&zero.y, n, p).iter().enumerate() {
        println!("  node {i}: {:.4?}", y.as_slice());
    }
    println!("q(0) = {:.6}, ‖∇q‖_M = {:.4e}", dual_value(&inst, &zero.lambda)?, m_norm(&inst, &zero.g)?);

    // Plain dual ascent along the gradient.
    let mut lambda = DVector::zeros(n * p);
    for k in 0..=400 {
        let g = dual_gradient(&inst, &lambda)?;
        if k % 100 == 0 {
            println!("iter {k:>3}  q {:.8}  ‖g‖_M {:.3e}", dual_value(&inst, &lambda)?, m_norm(&inst, &g)?);
        }
        lambda += g * 2e-3;
    }

    let theta = split_nodes(&recover_primal(&inst, &lambda)?, n, p);
    let opt = inst.centralized_optimum().expect("quadratic problems have a closed form");
    println!("centralized  f* = {:.8}  θ* = {:.5?}", opt.objective, opt.theta.as_slice());
    println!("node 0 after ascent         θ  = {:.5?}", theta[0].as_slice());
    Ok(())
}
