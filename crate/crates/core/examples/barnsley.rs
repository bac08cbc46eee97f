//! Barnsley's average-contraction and overlap conditions, checked by
//! enumerating every pattern window of a two-agent system with window 2.
//!
//! Run with:
//!   cargo run --release --example barnsley

use coupled_aimd::policy::{ConstantPolicy, PerAgentProbabilities, PolicySpec, UtilitySpec};
use coupled_aimd::policy::PolicyKind;
use coupled_aimd::verify::check_barnsley;
use coupled_aimd::{ResourceParams, Result};

fn main() -> Result<()> {
    let a = ResourceParams::from_slices(&[0.3, 0.7], &[0.5, 0.8], 1.0)?;
    let b = ResourceParams::from_slices(&[0.6, 0.4], &[0.7, 0.6], 1.0)?;

    let constant = ConstantPolicy {
        a: PerAgentProbabilities::new(vec![0.3, 0.6], 0.01)?,
        b: PerAgentProbabilities::new(vec![0.5, 0.4], 0.01)?,
    };
    let report = check_barnsley(&a, &b, &constant, 2, 2000, 1)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));

    // place-dependent probabilities from per-agent utilities
    let spec = PolicySpec {
        kind: PolicyKind::UtilityGradient {
            utilities: vec![
                UtilitySpec::Quadratic { weight_a: 1.0, weight_b: 1.0 },
                UtilitySpec::LogBarrier { weight_a: 0.5, weight_b: 2.0 },
            ],
            xi: None,
        },
        floor: 0.05,
    };
    let policy = spec.build(2, 2)?;
    let place = policy.as_average_policy().expect("utility policy reads current averages");
    let report = check_barnsley(&a, &b, place, 2, 2000, 2)?;
    println!(
        "utility gradient: p_hat {:.3e} (floor bound {:.3e})  r {:.6}  delta {:.3e}  pass {}",
        report.p_hat, report.p_hat_lower_bound, report.r, report.delta, report.pass
    );
    Ok(())
}
