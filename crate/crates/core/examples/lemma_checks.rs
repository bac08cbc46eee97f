//! Contraction properties of the lifted transitions for the four-agent study.
//!
//! Checks non-expansion in the block max 1-norm, invariance of the zero-sum
//! subspace, and strict contraction of the all-full-drop window.
//!
//! Run with:
//!   cargo run --release --example lemma_checks -- [samples]

use coupled_aimd::config::ExperimentConfig;
use coupled_aimd::verify::{check_full_drop_contraction, check_nonexpansive, check_subspace_invariance};
use coupled_aimd::Result;

fn main() -> Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let r = ExperimentConfig::table1().validate()?;
    let window = 5;

    let ne = check_nonexpansive(&r.params_a, &r.params_b, window, samples, samples, 1)?;
    println!("non-expansion:    max ratio {:.12}  violations {}", ne.max_ratio, ne.violations);

    let sub = check_subspace_invariance(&r.params_a, &r.params_b, window, samples, samples, 1)?;
    println!("zero-sum blocks:  max residual {:.2e}", sub.max_residual);

    let fd = check_full_drop_contraction(&r.params_a, &r.params_b, window, samples * samples, 1)?;
    println!(
        "full-drop window: max ratio {:.6} <= q = {:.6}  violations {}",
        fd.max_ratio, fd.bound, fd.violations
    );
    Ok(())
}
