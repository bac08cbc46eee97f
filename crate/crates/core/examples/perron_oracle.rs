//! Stationary mean of a single resource with fixed response probabilities.
//!
//! Compares the long-run time average of a simulation with the simplex
//! fixed point of the expected AIMD matrix.
//!
//! Run with:
//!   cargo run --release --example perron_oracle

use coupled_aimd::policy::PerAgentProbabilities;
use coupled_aimd::verify::{compare_with_perron, mean_matrix};
use coupled_aimd::{ResourceParams, Result, ShareVector};

fn main() -> Result<()> {
    let params = ResourceParams::from_slices(&[0.01, 0.08, 0.61, 0.045], &[0.95, 0.9, 0.85, 0.75], 1.0)?;
    let p = PerAgentProbabilities::new(vec![0.3, 0.5, 0.7, 0.9], 0.01)?;
    println!("expected matrix:{:.4}", mean_matrix(&params, &p)?);

    for events in [1_000, 10_000, 100_000] {
        let cmp = compare_with_perron(&params, &p, ShareVector::uniform(4), events, 3)?;
        println!("{events:>7} events  simulated {:.4?}  gap {:.2e}", cmp.simulated, cmp.l1_gap);
        if events == 100_000 {
            println!("         perron    {:.4?}", cmp.perron);
        }
    }
    Ok(())
}
