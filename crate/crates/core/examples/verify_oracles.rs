use sdd_newton::verify::{verify, Suite, VerifyOptions};

fn main() -> sdd_newton::Result<()> {
    let report = verify(Suite::All, &VerifyOptions { quick: true, ..VerifyOptions::default() })?;
    println!("{report}");

    let broken = verify(Suite::Sdd, &VerifyOptions { quick: true, inject_fault: true, seed: 0 })?;
    println!("with a corrupted chain, {} checks fail", broken.failures().count());
    Ok(())
}
