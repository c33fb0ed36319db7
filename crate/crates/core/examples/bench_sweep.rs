//! A small Monte Carlo sweep over the sequential world, printing the median
//! F-score of every method at each sample size.
//!
//! cargo run --release --example bench_sweep

use labelfuse::app::bench::{median, seq_trial, MethodOutcome};
use labelfuse::synth::SeqWorldConfig;

fn main() -> labelfuse::Result<()> {
    let sizes = [400, 1600];
    let mut table: Vec<(usize, Vec<Vec<MethodOutcome>>)> = Vec::new();
    for n in sizes {
        let runs = (0..5)
            .map(|seed| seq_trial(&SeqWorldConfig::standard(n), seed))
            .collect::<labelfuse::Result<_>>()?;
        table.push((n, runs));
    }
    let methods: Vec<&str> = table[0].1[0].iter().map(|o| o.method).collect();
    print!("{:>6}", "N");
    for m in &methods {
        print!(" {m:>10}");
    }
    println!();
    for (n, runs) in &table {
        print!("{n:>6}");
        for m in &methods {
            let f: Vec<f64> = runs
                .iter()
                .map(|r| r.iter().find(|o| o.method == *m).expect("every run scores every method").fscore)
                .collect();
            print!(" {:>10.4}", median(&f));
        }
        println!();
    }
    Ok(())
}
