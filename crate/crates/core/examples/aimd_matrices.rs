//! AIMD matrices: build, apply, and check the step from one capacity event
//! to the next.
//!
//! Prints every drop pattern of resource `a` from the four-agent study with
//! its inter-event time from the uniform state, then the full-drop
//! contraction factor for a range of windows.
//!
//! Run with:
//!   cargo run --example aimd_matrices

use coupled_aimd::aimd::{apply_aimd, build_aimd_matrix, contraction_factor, inter_event_time, is_column_stochastic};
use coupled_aimd::{DropPattern, ResourceParams, Result, ShareVector};

fn main() -> Result<()> {
    let params = ResourceParams::from_slices(&[0.01, 0.08, 0.61, 0.045], &[0.95, 0.9, 0.85, 0.75], 1.0)?;
    let x = ShareVector::uniform(params.n());

    println!("pattern  T        x'");
    for pattern in DropPattern::all(params.n()) {
        let m = build_aimd_matrix(&params, &pattern);
        assert!(is_column_stochastic(&m, 1e-12)?);
        let next = apply_aimd(&params, &pattern, &x);
        let t = inter_event_time(&params, &pattern, &x);
        println!("{pattern}     {t:<8.4} {:.4?}", next.as_slice());
    }

    let full = build_aimd_matrix(&params, &DropPattern::full(params.n()));
    println!("\nfull-drop matrix:{full:.4}");

    // the bound on window contraction uses the slowest decrease factor
    let beta = params.max_beta();
    for window in [1, 2, 5, 10, 50] {
        println!("q(beta = {beta}, N = {window:>2}) = {:.6}", contraction_factor(beta, window)?);
    }
    Ok(())
}
