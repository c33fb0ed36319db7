//! Fuse labels of graph-linked items with the MRF pipeline and show how the
//! gain over per-item fusion grows with the graph's mean degree.
//!
//! cargo run --example networked

use labelfuse::eval::fscore;
use labelfuse::iid::{map_labels, moment_matching};
use labelfuse::networked::{fuse_networked, DeltaMode, MrfConfig, NetworkedOptions};
use labelfuse::optim::MomentFitConfig;
use labelfuse::synth::{simulate_networked, NetWorldConfig};

fn main() -> labelfuse::Result<()> {
    println!("{:>7} {:>10} {:>10} {:>10}", "degree", "moments", "MRF (M)", "MRF (auto)");
    for degree in [0.5, 2.0, 5.0, 10.0] {
        let world = simulate_networked(&NetWorldConfig::standard(3000, degree), 7)?;
        let (fit, _) = moment_matching(&world.responses, &MomentFitConfig::default())?;
        let mm = map_labels(&world.responses, &fit.confusions, &fit.prior)?;
        let fixed = fuse_networked(&world.responses, &world.graph, &NetworkedOptions::default())?;
        let auto = fuse_networked(
            &world.responses,
            &world.graph,
            &NetworkedOptions {
                mrf: MrfConfig {
                    delta: DeltaMode::HalfResponders,
                    ..MrfConfig::default()
                },
                ..NetworkedOptions::default()
            },
        )?;
        println!(
            "{:>7.1} {:>10.4} {:>10.4} {:>10.4}",
            world.graph.mean_degree(),
            fscore(&world.truth, &mm, 4)?,
            fscore(&world.truth, &fixed.labels, 4)?,
            fscore(&world.truth, &auto.labels, 4)?
        );
    }
    Ok(())
}
