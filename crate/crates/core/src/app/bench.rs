//! `labelfuse bench`: Monte Carlo sweeps over the synthetic protocols.
//!
//! Every method runs on the same simulated world per seed; the oracle decodes
//! with the generating parameters only.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::app::manifest::{sha256_hex, Manifest, FORMAT_VERSION};
use crate::app::{to_json, write_file};
use crate::error::{FusionError, Result};
use crate::eval::{confusion_error, fscore, sequence_fscore, transition_error, MetricRecord};
use crate::iid::{majority_vote, map_labels, moment_matching};
use crate::networked::{fuse_networked, icm, EdgeDeltas, MrfConfig, NetworkedOptions};
use crate::optim::MomentFitConfig;
use crate::sequential::{decode_with, fuse_sequential, HmmParams, InitMethod, SequentialOptions};
use crate::synth::{
    derive_seed, simulate_networked, simulate_sequential, stationary_distribution, NetWorld, NetWorldConfig, SeqWorld,
    SeqWorldConfig,
};
use crate::types::{FusionResult, Prior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Figure {
    /// Sequential world, sweep over N.
    #[value(name = "seq-N", alias = "seq-n")]
    #[serde(rename = "seq-N")]
    SeqN,
    /// Sequential world, sweep over M.
    #[value(name = "seq-M", alias = "seq-m")]
    #[serde(rename = "seq-M")]
    SeqM,
    /// Networked world, sweep over N for each mean degree.
    #[value(name = "net-N", alias = "net-n")]
    #[serde(rename = "net-N")]
    NetN,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    /// Monte Carlo runs per point.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed; runs use `seed_base .. seed_base + seeds`.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    /// Item counts swept by seq-N and net-N.
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    pub sizes: Vec<usize>,
    /// Learner counts swept by seq-M.
    #[arg(long, value_delimiter = ',', default_value = "3,6,10")]
    pub learner_counts: Vec<usize>,
    /// Mean degrees for net-N.
    #[arg(long, value_delimiter = ',', default_value = "0.5,5")]
    pub degrees: Vec<f64>,
    /// Item count held fixed by seq-M.
    #[arg(long, default_value_t = 1000)]
    pub fixed_items: usize,
    /// Learner count held fixed by seq-N and net-N.
    #[arg(long, default_value_t = 10)]
    pub learners: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Output directory (not recorded in the manifest).
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Scores of one method on one simulated world.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: &'static str,
    pub fscore: f64,
    pub confusion_error: Option<f64>,
    pub transition_error: Option<f64>,
}

pub const SEQ_METHODS: [&str; 6] = ["MV", "MM", "Alg2", "Alg2+Alg1", "MV+Alg1", "Oracle"];
pub const NET_METHODS: [&str; 5] = ["MV", "MM", "Alg4", "MV+Alg3", "Oracle"];

/// Viterbi decoding with the generating parameters of `world`.
pub fn seq_oracle(world: &SeqWorld) -> Result<Vec<usize>> {
    let params = HmmParams {
        initial: stationary_distribution(&world.transition)?,
        transition: world.transition.clone(),
        confusions: world.confusions.clone(),
    };
    decode_with(&world.responses, &world.partition, &params)
}

/// ICM with the generating confusion matrices of `world`, started from
/// their MAP labels.
pub fn net_oracle(world: &NetWorld, mrf: &MrfConfig) -> Result<Vec<usize>> {
    let k = world.confusions[0].n_classes();
    let start = map_labels(&world.responses, &world.confusions, &Prior::uniform(k))?;
    let deltas = EdgeDeltas::resolve(&world.graph, &world.responses, mrf.delta)?;
    Ok(icm(&world.responses, &world.confusions, &world.graph, &deltas, &start, mrf.t_max)?.labels)
}

fn moment_config(seed: u64) -> MomentFitConfig {
    MomentFitConfig {
        seed: derive_seed(seed, 17),
        ..MomentFitConfig::default()
    }
}

/// Runs every sequential method on the world simulated from `seed`.
pub fn seq_trial(config: &SeqWorldConfig, seed: u64) -> Result<Vec<MethodOutcome>> {
    let w = simulate_sequential(config, seed)?;
    let k = config.k;
    let score = |r: &FusionResult, with_t: bool| -> Result<MethodOutcome> {
        Ok(MethodOutcome {
            method: "",
            fscore: sequence_fscore(&w.truth, &r.labels, k, &w.partition)?,
            confusion_error: Some(confusion_error(&w.confusions, &r.confusions)?),
            transition_error: match (&r.transition, with_t) {
                (Some(t), true) => Some(transition_error(&w.transition, t)?),
                _ => None,
            },
        })
    };
    let moment = moment_config(seed);
    let seq_options = |init, refine| SequentialOptions {
        init,
        refine,
        moment: moment.clone(),
        ..SequentialOptions::default()
    };
    let mv = majority_vote(&w.responses);
    let (_, mm) = moment_matching(&w.responses, &moment)?;
    let alg2 = fuse_sequential(&w.responses, &w.partition, &seq_options(InitMethod::MomentMatching, false))?;
    let alg21 = fuse_sequential(&w.responses, &w.partition, &seq_options(InitMethod::MomentMatching, true))?;
    let mv1 = fuse_sequential(&w.responses, &w.partition, &seq_options(InitMethod::MajorityVote, true))?;
    let oracle = seq_oracle(&w)?;
    let mut out = vec![
        score(&mv, false)?,
        score(&mm, false)?,
        score(&alg2, true)?,
        score(&alg21, true)?,
        score(&mv1, true)?,
        MethodOutcome {
            method: "",
            fscore: sequence_fscore(&w.truth, &oracle, k, &w.partition)?,
            confusion_error: None,
            transition_error: None,
        },
    ];
    for (o, name) in out.iter_mut().zip(SEQ_METHODS) {
        o.method = name;
    }
    Ok(out)
}

/// Runs every networked method on the world simulated from `seed`.
pub fn net_trial(config: &NetWorldConfig, seed: u64) -> Result<Vec<MethodOutcome>> {
    let w = simulate_networked(config, seed)?;
    let k = config.k;
    let score = |labels: &[usize], r: Option<&FusionResult>| -> Result<MethodOutcome> {
        Ok(MethodOutcome {
            method: "",
            fscore: fscore(&w.truth, labels, k)?,
            confusion_error: r.map(|r| confusion_error(&w.confusions, &r.confusions)).transpose()?,
            transition_error: None,
        })
    };
    let moment = moment_config(seed);
    let options = |init| NetworkedOptions {
        init,
        moment: moment.clone(),
        mrf: MrfConfig::default(),
    };
    let mv = majority_vote(&w.responses);
    let (_, mm) = moment_matching(&w.responses, &moment)?;
    let alg4 = fuse_networked(&w.responses, &w.graph, &options(InitMethod::MomentMatching))?;
    let mv3 = fuse_networked(&w.responses, &w.graph, &options(InitMethod::MajorityVote))?;
    let oracle = net_oracle(&w, &MrfConfig::default())?;
    let mut out = vec![
        score(&mv.labels, Some(&mv))?,
        score(&mm.labels, Some(&mm))?,
        score(&alg4.labels, Some(&alg4))?,
        score(&mv3.labels, Some(&mv3))?,
        score(&oracle, None)?,
    ];
    for (o, name) in out.iter_mut().zip(NET_METHODS) {
        o.method = name;
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    median(&values.iter().map(|v| (v - m).abs()).collect::<Vec<_>>())
}

/// Summary of one method and metric at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub axis: &'static str,
    pub value: f64,
    pub degree: Option<f64>,
    pub method: &'static str,
    pub metric: &'static str,
    pub median: f64,
    pub mad: f64,
    pub runs: usize,
}

/// Per-method medians over runs: `(method, metric, median, mad, runs)`.
pub fn summarize(runs: &[Vec<MethodOutcome>]) -> Vec<(&'static str, &'static str, f64, f64, usize)> {
    let mut out = Vec::new();
    let Some(first) = runs.first() else {
        return out;
    };
    for (i, m) in first.iter().enumerate() {
        let metrics: [(&str, Box<dyn Fn(&MethodOutcome) -> Option<f64>>); 3] = [
            ("fscore", Box::new(|o| Some(o.fscore))),
            ("confusion_error", Box::new(|o| o.confusion_error)),
            ("transition_error", Box::new(|o| o.transition_error)),
        ];
        for (name, get) in metrics {
            let vals: Vec<f64> = runs.iter().filter_map(|r| get(&r[i])).collect();
            if !vals.is_empty() {
                out.push((m.method, name, median(&vals), mad(&vals), vals.len()));
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct BenchReport {
    format_version: u32,
    figure: Figure,
    points: Vec<PointSummary>,
    records: Vec<MetricRecord>,
}

enum PointConfig {
    Seq(SeqWorldConfig),
    Net(NetWorldConfig),
}

fn fingerprint(p: &PointConfig) -> String {
    let text = match p {
        PointConfig::Seq(c) => format!("{c:?}"),
        PointConfig::Net(c) => format!("{c:?}"),
    };
    sha256_hex(text.as_bytes())[..16].to_string()
}

pub const CSV_FILE: &str = "bench.csv";
pub const JSON_FILE: &str = "bench.json";

pub fn run(args: &BenchArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(FusionError::InvalidParameter("--seeds must be positive".into()));
    }
    let mut points: Vec<(&'static str, f64, Option<f64>, PointConfig)> = Vec::new();
    let seq = |n: usize, m: usize| {
        let mut c = SeqWorldConfig::standard(n);
        c.k = args.classes;
        c.m = m;
        PointConfig::Seq(c)
    };
    match args.figure {
        Figure::SeqN => {
            for &n in &args.sizes {
                points.push(("N", n as f64, None, seq(n, args.learners)));
            }
        }
        Figure::SeqM => {
            for &m in &args.learner_counts {
                points.push(("M", m as f64, None, seq(args.fixed_items, m)));
            }
        }
        Figure::NetN => {
            for &d in &args.degrees {
                for &n in &args.sizes {
                    let mut c = NetWorldConfig::standard(n, d);
                    c.k = args.classes;
                    c.m = args.learners;
                    points.push(("N", n as f64, Some(d), PointConfig::Net(c)));
                }
            }
        }
    }

    let mut summaries = Vec::new();
    let mut records = Vec::new();
    let mut csv = String::from("figure,axis,value,degree,method,metric,median,mad,runs\n");
    let figure_name = args.figure.to_possible_value().expect("named").get_name().to_string();
    for (axis, value, degree, config) in &points {
        let seeds: Vec<u64> = (args.seed_base..args.seed_base + args.seeds).collect();
        let runs: Vec<Vec<MethodOutcome>> = seeds
            .par_iter()
            .map(|&s| match config {
                PointConfig::Seq(c) => seq_trial(c, s),
                PointConfig::Net(c) => net_trial(c, s),
            })
            .collect::<Result<_>>()?;
        let fp = fingerprint(config);
        for (&seed, run) in seeds.iter().zip(&runs) {
            for o in run {
                let metrics = [
                    ("fscore", Some(o.fscore)),
                    ("confusion_error", o.confusion_error),
                    ("transition_error", o.transition_error),
                ];
                for (name, v) in metrics {
                    if let Some(v) = v {
                        records.push(MetricRecord {
                            metric: format!("{}/{}", name, o.method),
                            value: v,
                            config_fingerprint: fp.clone(),
                            seed,
                        });
                    }
                }
            }
        }
        for (method, metric, med, dev, count) in summarize(&runs) {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                figure_name,
                axis,
                value,
                degree.map(|d| d.to_string()).unwrap_or_default(),
                method,
                metric,
                med,
                dev,
                count
            ));
            summaries.push(PointSummary {
                axis,
                value: *value,
                degree: *degree,
                method,
                metric,
                median: med,
                mad: dev,
                runs: count,
            });
        }
    }

    std::fs::create_dir_all(&args.out_dir)?;
    write_file(&args.out_dir, CSV_FILE, &csv)?;
    let report = BenchReport {
        format_version: FORMAT_VERSION,
        figure: args.figure,
        points: summaries,
        records,
    };
    write_file(&args.out_dir, JSON_FILE, &to_json(&report)?)?;
    Manifest {
        format_version: FORMAT_VERSION,
        command: "bench".into(),
        options: args.clone(),
        seed: args.seed_base,
        inputs: Vec::new(),
        outputs: vec![CSV_FILE.into(), JSON_FILE.into()],
    }
    .write(&args.out_dir)
}
