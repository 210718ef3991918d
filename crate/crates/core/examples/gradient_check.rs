//! Compares backpropagated gradients with central differences for every
//! encoder and attention pairing on the three-document fixture.
//!
//! cargo run --release --example gradient_check

use knowcage::gradcheck::{gradcheck_all, GRADCHECK_TOLERANCE};

fn main() -> knowcage::Result<()> {
    let reports = gradcheck_all(0)?;
    println!("{:<7} {:<11} {:>8} {:>12}", "encoder", "attention", "scalars", "max rel err");
    for r in &reports {
        println!(
            "{:<7} {:<11} {:>8} {:>12.3e} {}",
            r.encoder.to_string(),
            r.attention.to_string(),
            r.n_scalars,
            r.max_relative_error,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let worst = reports.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    println!("worst {worst:.3e} against tolerance {GRADCHECK_TOLERANCE:.0e}");
    Ok(())
}
