//! The synchronous network simulator on its own: neighbor exchanges,
//! message counting in both units, and the locality audit that rejects a
//! read across a non-edge.

use nalgebra::DVector;
use sdd_newton::graph::Graph;
use sdd_newton::sim::{consensus_error, MessageUnit, Network};

fn main() -> sdd_newton::Result<()> {
    let g = Graph::path(5)?;
    let values: Vec<DVector<f64>> = (0..5).map(|i| DVector::from_vec(vec![i as f64, 1.0])).collect();

    for unit in [MessageUnit::Vector, MessageUnit::Scalar] {
        let mut net = Network::new(&g, unit);
        let lx = net.laplacian_apply(&values)?;
        println!("{unit:?}: L x = {:?}, {} messages in {} rounds", lx.iter().map(|v| v[0]).collect::<Vec<_>>(), net.messages(), net.rounds());
    }

    // Repeated neighbor averaging drives the path to consensus.
    let mut net = Network::new(&g, MessageUnit::Vector).recording();
    let mut x = values;
    for _ in 0..200 {
        let lx = net.laplacian_apply(&x)?;
        x = x.iter().zip(&lx).map(|(xi, li)| xi - li * 0.3).collect();
    }
    println!("after 200 rounds: consensus error {:.2e}, node 4 holds {:.4}", consensus_error(&g, &x), x[4][0]);
    net.audit()?;

    net.record_read(0, 4);
    match net.audit() {
        Ok(()) => println!("audit passed"),
        Err(e) => println!("audit caught it: {e}"),
    }
    Ok(())
}
