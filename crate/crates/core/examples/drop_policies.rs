//! Drop policies: constant, window-mean and utility-gradient probabilities,
//! and pattern sampling.
//!
//! Run with:
//!   cargo run --example drop_policies

use coupled_aimd::policy::{
    default_xi, pattern_probability, sample_pattern, utility_gradient_policy, window_mean_policy, AverageWindow,
    PerAgentProbabilities, UtilitySpec,
};
use coupled_aimd::{DropPattern, Resource, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    // constant: the probability of a pattern is a product of Bernoulli terms
    let p = PerAgentProbabilities::new(vec![0.2, 0.5, 0.9], 0.01)?;
    let mut total = 0.0;
    for pattern in DropPattern::all(3) {
        let prob = pattern_probability(&p, &pattern);
        total += prob;
        println!("P({pattern}) = {prob:.4}");
    }
    println!("sum = {total}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    let mut hits = [0u32; 3];
    for _ in 0..draws {
        let pat = sample_pattern(&p, &mut rng);
        for (i, h) in hits.iter_mut().enumerate() {
            *h += u32::from(pat.drops(i));
        }
    }
    let freq: Vec<f64> = hits.iter().map(|&h| h as f64 / draws as f64).collect();
    println!("empirical marginals {freq:.3?}");

    // window-mean: agents with larger recent shares respond more often
    let window = 3;
    let (mut wa, mut wb) = (AverageWindow::new(window), AverageWindow::new(window));
    for x in [[0.6, 0.3, 0.1], [0.5, 0.3, 0.2], [0.7, 0.2, 0.1], [0.6, 0.2, 0.2]] {
        wa.push(&x);
        wb.push(&[0.2, 0.4, 0.4]);
    }
    let wm = window_mean_policy(&wa, &wb, window, 0.01);
    println!("window-mean probabilities {:.4?}", wm.as_slice());

    // utility gradient: probabilities scale with marginal cost per unit share
    let utilities = vec![
        UtilitySpec::Quadratic { weight_a: 1.0, weight_b: 1.0 },
        UtilitySpec::LogBarrier { weight_a: 1.0, weight_b: 1.0 },
        UtilitySpec::Power { gamma: 3.0, weight_a: 2.0, weight_b: 1.0 },
    ];
    let xi = default_xi(&utilities, Resource::A)?;
    let ug = utility_gradient_policy(wa.average(), wb.average(), &utilities, xi, 0.01, Resource::A)?;
    println!("utility-gradient probabilities (xi = {xi:.4}) {:.4?}", ug.as_slice());
    Ok(())
}
