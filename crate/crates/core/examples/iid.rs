//! Fuse independent crowd labels with majority voting, moment matching and
//! Dawid-Skene EM, and compare them against the truth.
//!
//! cargo run --example iid

use labelfuse::eval::{confusion_error, fscore};
use labelfuse::iid::{ds_em, majority_vote, moment_matching, DsConfig};
use labelfuse::optim::MomentFitConfig;
use labelfuse::synth::{derive_seed, gen_confusions, gen_responses};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> labelfuse::Result<()> {
    let (k, m, n) = (3, 7, 2000);
    let seed = 11;
    let confusions = gen_confusions(m, k, derive_seed(seed, 1), None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(1..=k)).collect();
    let responses = gen_responses(&truth, &confusions, 0.3, derive_seed(seed, 4))?;

    let mv = majority_vote(&responses);
    let (_, mm) = moment_matching(&responses, &MomentFitConfig::default())?;
    let em = ds_em(&responses, &mm.confusions, &mm.prior, &DsConfig::default())?;

    println!("{:<10} {:>8} {:>12}", "method", "F-score", "conf. error");
    for (name, r) in [("MV", &mv), ("MM", &mm), ("MM+EM", &em)] {
        println!(
            "{:<10} {:>8.4} {:>12.4}",
            name,
            fscore(&truth, &r.labels, k)?,
            confusion_error(&confusions, &r.confusions)?
        );
    }
    println!("EM converged after {} iterations", em.iterations);
    Ok(())
}
