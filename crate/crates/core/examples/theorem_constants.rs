//! Phase thresholds of the convergence analysis for a few graphs, evaluated
//! from curvature and spectrum alone.

use sdd_newton::consensus::{ConstantInputs, ConvergenceConstants};
use sdd_newton::graph::{laplacian, spectral_info, Graph};

fn main() -> sdd_newton::Result<()> {
    let graphs = [("path", Graph::path(10)?), ("cycle", Graph::cycle(10)?), ("complete", Graph::complete(10)?)];
    for (name, g) in graphs {
        let s = spectral_info(&laplacian(&g))?;
        let inputs = ConstantInputs { gamma: 1.0, big_gamma: 4.0, delta: 0.5, p: 3, mu2: s.mu2, mu_n: s.mu_n };
        println!("{name}: μ₂ = {:.4}, μ_n = {:.4}, admissible ε up to {:.3e}", s.mu2, s.mu_n, inputs.eps_upper());
        for eps in [0.0, 1e-3, 0.1] {
            let c = ConvergenceConstants::from_inputs(&inputs, eps)?;
            println!(
                "  ε = {eps:<6} α* = {:.3e}  ζ = {:.6}  η₀ = {:.3e}  η₁ = {:.3e}  admissible = {}",
                c.alpha_star, c.zeta, c.eta0, c.eta1, c.admissible
            );
        }
    }
    Ok(())
}
