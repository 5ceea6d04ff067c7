//! Solve a graph Laplacian system with the inverse chain and watch the
//! Richardson refinement close in on the pseudo-inverse solution.
//!
//! ```text
//! cargo run --example sdd_solve -- 60 150
//! ```

use nalgebra::DVector;
use sdd_newton::graph::{generate_random_graph, laplacian};
use sdd_newton::sdd::{exact_solve_with, m_norm, InverseChain, SolveOptions};

fn main() -> sdd_newton::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("sizes are integers"));
    let n = args.next().unwrap_or(60);
    let m = args.next().unwrap_or(150);

    let g = generate_random_graph(n, m, 7)?;
    let l = laplacian(&g);
    let mut b = DVector::from_fn(n, |i, _| ((i * 13) as f64).sin());
    b.add_scalar_mut(-b.mean());

    for depth in [Some(1), None] {
        let chain = InverseChain::from_matrix(l.matrix(), depth)?;
        println!("depth {:>2}  contraction {:.3e}", chain.depth(), chain.crude_contraction());

        let opts = SolveOptions::new(1e-10);
        let rep = exact_solve_with(&chain, &b, &opts, |k, y| {
            let r = l.apply(y) - &b;
            println!("  iter {k:>3}  residual {:.3e}", r.norm());
        })?;
        let x = &rep.solution;
        println!(
            "  converged {}  refinements {}  bound {:?}  energy norm {:.4}",
            rep.converged,
            rep.richardson_iters,
            rep.error_bound,
            m_norm(l.matrix(), x)
        );
        println!("  work {:?}", rep.work);
    }
    Ok(())
}
