//! `labelfuse simulate`: write a synthetic dataset and its generating
//! parameters in the input file formats.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ndarray::Array1;
use serde::Serialize;

use crate::app::fuse::ParamsFile;
use crate::app::manifest::{Manifest, FORMAT_VERSION};
use crate::app::{to_json, write_file};
use crate::error::{FusionError, Result};
use crate::io::{format_graph, format_labels, format_partition, format_responses};
use crate::synth::{simulate_networked, simulate_sequential, stationary_distribution, NetWorldConfig, SeqWorldConfig};
use crate::types::Prior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    /// Markov-chain labels split into equal-length segments.
    Seq,
    /// Stochastic-block-model graph whose communities are the labels.
    Net,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub world: World,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub learners: usize,
    /// Learners better than random (default: half of them plus one).
    #[arg(long)]
    pub better_count: Option<usize>,
    /// Segment length (seq world).
    #[arg(long, default_value_t = 40)]
    pub segment_len: usize,
    /// Number of segments (seq world).
    #[arg(long, default_value_t = 25)]
    pub segments: usize,
    /// Number of items (net world).
    #[arg(long, default_value_t = 1000)]
    pub items: usize,
    /// Target mean degree (net world).
    #[arg(long, default_value_t = 5.0)]
    pub degree: f64,
    /// Probability that a response is blanked.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (not recorded in the manifest).
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

pub const RESPONSES_FILE: &str = "responses.csv";
pub const TRUTH_FILE: &str = "truth.txt";
pub const PARTITION_FILE: &str = "partition.txt";
pub const GRAPH_FILE: &str = "graph.txt";
pub const PARAMS_FILE: &str = "params.json";

pub fn run(args: &SimulateArgs) -> Result<()> {
    if args.segment_len == 0 || args.segments == 0 || args.items == 0 {
        return Err(FusionError::InvalidParameter("sizes must be positive".into()));
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    let mut outputs = vec![RESPONSES_FILE, TRUTH_FILE];
    match args.world {
        World::Seq => {
            let config = SeqWorldConfig {
                k: args.classes,
                m: args.learners,
                segment_len: args.segment_len,
                n_segments: args.segments,
                missing_rate: args.missing,
                better_count: args.better_count,
            };
            let w = simulate_sequential(&config, args.seed)?;
            write_file(dir, RESPONSES_FILE, &format_responses(&w.responses))?;
            write_file(dir, TRUTH_FILE, &format_labels(&w.truth))?;
            write_file(dir, PARTITION_FILE, &format_partition(&w.partition))?;
            let params = ParamsFile {
                prior: stationary_distribution(&w.transition)?,
                confusions: w.confusions,
                transition: Some(w.transition),
            };
            write_file(dir, PARAMS_FILE, &to_json(&params)?)?;
            outputs.push(PARTITION_FILE);
        }
        World::Net => {
            let config = NetWorldConfig {
                k: args.classes,
                m: args.learners,
                n: args.items,
                mean_degree: args.degree,
                missing_rate: args.missing,
                better_count: args.better_count,
            };
            let w = simulate_networked(&config, args.seed)?;
            write_file(dir, RESPONSES_FILE, &format_responses(&w.responses))?;
            write_file(dir, TRUTH_FILE, &format_labels(&w.truth))?;
            write_file(dir, GRAPH_FILE, &format_graph(&w.graph))?;
            let mut freq = Array1::<f64>::zeros(args.classes);
            for &y in &w.truth {
                freq[y - 1] += 1.0;
            }
            let params = ParamsFile {
                prior: Prior::normalized(freq)?,
                confusions: w.confusions,
                transition: None,
            };
            write_file(dir, PARAMS_FILE, &to_json(&params)?)?;
            outputs.push(GRAPH_FILE);
        }
    }
    outputs.push(PARAMS_FILE);
    Manifest {
        format_version: FORMAT_VERSION,
        command: "simulate".into(),
        options: args.clone(),
        seed: args.seed,
        inputs: Vec::new(),
        outputs: outputs.into_iter().map(String::from).collect(),
    }
    .write(dir)
}
