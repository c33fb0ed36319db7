//! Recover a Markov transition matrix from lagged response statistics when
//! the learners' confusion matrices are known, for growing sample sizes.
//!
//! cargo run --release --example transition_recovery

use labelfuse::eval::transition_error;
use labelfuse::moments::estimate_lagged_moments;
use labelfuse::optim::fit_transition;
use labelfuse::synth::{simulate_sequential, SeqWorldConfig};

fn main() -> labelfuse::Result<()> {
    println!("{:>8} {:>12} {:>12}", "N", "mean error", "worst error");
    for n in [1_000, 10_000, 100_000] {
        let errors: Vec<f64> = (0..5)
            .map(|seed| {
                let world = simulate_sequential(&SeqWorldConfig::standard(n), seed)?;
                let lagged = estimate_lagged_moments(&world.responses, &world.partition)?;
                let fit = fit_transition(&lagged, &world.confusions)?;
                transition_error(&world.transition, &fit.transition)
            })
            .collect::<labelfuse::Result<_>>()?;
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let worst = errors.iter().copied().fold(0.0, f64::max);
        println!("{n:>8} {mean:>12.4} {worst:>12.4}");
    }
    Ok(())
}
