//! Label a set of sequences with the HMM pipeline and compare the decoded
//! labels with per-item fusion and with decoding under the true parameters.
//!
//! cargo run --example sequential

use labelfuse::app::bench::seq_oracle;
use labelfuse::eval::{fscore, sequence_fscore, transition_error};
use labelfuse::iid::majority_vote;
use labelfuse::sequential::{fuse_sequential, InitMethod, SequentialOptions};
use labelfuse::synth::{simulate_sequential, SeqWorldConfig};

fn main() -> labelfuse::Result<()> {
    let world = simulate_sequential(&SeqWorldConfig::standard(4000), 3)?;
    let k = 4;

    let mv = majority_vote(&world.responses);
    let moments_only = fuse_sequential(&world.responses, &world.partition, &SequentialOptions::default())?;
    let refined = fuse_sequential(
        &world.responses,
        &world.partition,
        &SequentialOptions {
            refine: true,
            ..SequentialOptions::default()
        },
    )?;
    let from_votes = fuse_sequential(
        &world.responses,
        &world.partition,
        &SequentialOptions {
            init: InitMethod::MajorityVote,
            refine: true,
            ..SequentialOptions::default()
        },
    )?;
    let oracle = seq_oracle(&world)?;

    println!("{:<22} {:>8} {:>10}", "method", "F-score", "seq. F");
    let rows = [
        ("majority vote", &mv.labels),
        ("moments + Viterbi", &moments_only.labels),
        ("moments + Baum-Welch", &refined.labels),
        ("votes + Baum-Welch", &from_votes.labels),
        ("true parameters", &oracle),
    ];
    for (name, labels) in rows {
        println!(
            "{:<22} {:>8.4} {:>10.4}",
            name,
            fscore(&world.truth, labels, k)?,
            sequence_fscore(&world.truth, labels, k, &world.partition)?
        );
    }
    let t = moments_only.transition.as_ref().expect("sequential result has a transition");
    println!("transition error: {:.4}", transition_error(&world.transition, t)?);
    for w in &refined.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
