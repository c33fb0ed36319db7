//! Write a synthetic sequential dataset in the CLI file formats, read it
//! back and fuse it, as `labelfuse simulate` followed by `labelfuse fuse`
//! would.
//!
//! cargo run --example simulate_replay

use labelfuse::eval::fscore;
use labelfuse::io::{
    format_labels, format_partition, format_responses, parse_labels, parse_partition, parse_responses,
};
use labelfuse::sequential::{fuse_sequential, SequentialOptions};
use labelfuse::synth::{simulate_sequential, SeqWorldConfig};

fn main() -> labelfuse::Result<()> {
    let dir = std::env::temp_dir().join("labelfuse-replay");
    std::fs::create_dir_all(&dir)?;
    let world = simulate_sequential(&SeqWorldConfig::standard(1200), 21)?;
    std::fs::write(dir.join("responses.csv"), format_responses(&world.responses))?;
    std::fs::write(dir.join("partition.txt"), format_partition(&world.partition))?;
    std::fs::write(dir.join("truth.txt"), format_labels(&world.truth))?;

    let text = std::fs::read_to_string(dir.join("responses.csv"))?;
    let responses = parse_responses(&text, Some(4), "responses.csv")?;
    let text = std::fs::read_to_string(dir.join("partition.txt"))?;
    let partition = parse_partition(&text, responses.n_items(), "partition.txt")?;
    let text = std::fs::read_to_string(dir.join("truth.txt"))?;
    let truth = parse_labels(&text, 4, "truth.txt")?;
    assert_eq!(responses.entries(), world.responses.entries());

    let result = fuse_sequential(&responses, &partition, &SequentialOptions::default())?;
    println!(
        "{} items in {} segments from {}: F-score {:.4}",
        responses.n_items(),
        partition.lengths().len(),
        dir.display(),
        fscore(&truth, &result.labels, 4)?
    );
    Ok(())
}
