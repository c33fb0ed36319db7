//! `labelfuse fuse`: run a fusion pipeline on response files.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::app::manifest::{InputDigest, Manifest};
use crate::app::{to_json, write_file, Init, Refine};
use crate::error::{FusionError, Result};
use crate::iid::{ds_e_step, ds_em, majority_vote, map_labels, moment_matching, DsConfig};
use crate::io::{format_labels, format_matrix_csv, parse_graph, parse_partition, parse_responses, read_to_string};
use crate::networked::{fuse_networked, DeltaMode, MrfConfig, NetworkedOptions};
use crate::optim::MomentFitConfig;
use crate::sequential::{fuse_sequential, BaumWelchConfig, SequentialOptions};
use crate::types::{ConfusionMatrix, FusionResult, Prior, ResponseMatrix, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Independent items.
    Iid,
    /// Sequences (requires --partition).
    Seq,
    /// Graph-linked items (requires --graph).
    Net,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FuseArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Response CSV: one row per item, one column per learner, 0 = missing.
    #[arg(long)]
    pub responses: PathBuf,
    /// Number of classes; inferred from the largest response when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Segment lengths, one per line.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Edge list `n n' [delta]` with 1-based node ids.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mm")]
    pub init: Init,
    /// EM refinement for iid and seq modes (net mode always runs MRF-EM).
    #[arg(long, value_enum, default_value = "none")]
    pub refine: Refine,
    /// Edge strength: `auto` (responders / 2 per item), a positive number,
    /// or `file` (weights from the graph file). Defaults to the number of
    /// learners.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// ICM sweep cap.
    #[arg(long, default_value_t = 20)]
    pub tmax: usize,
    /// EM iteration cap (default 100 for iid/seq, 50 for net).
    #[arg(long)]
    pub em_iters: Option<usize>,
    /// EM convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Seed of the moment-fit restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep class priors fixed at uniform (iid mode).
    #[arg(long)]
    pub uniform_prior: bool,
    /// Output directory (not recorded in the manifest).
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

pub const LABELS_FILE: &str = "labels.txt";
pub const POSTERIORS_FILE: &str = "posteriors.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Estimated or generating parameters as written to `params.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ParamsFile {
    pub confusions: Vec<ConfusionMatrix>,
    pub prior: Prior,
    pub transition: Option<TransitionMatrix>,
}

#[derive(Debug, Clone, Serialize)]
struct DeltaDiagnostics {
    mode: &'static str,
    value: Option<f64>,
    per_item: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
struct Diagnostics {
    mode: Mode,
    loglik_trace: Vec<f64>,
    iterations: usize,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<DeltaDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn parse_delta(arg: Option<&str>) -> Result<DeltaMode> {
    match arg {
        None => Ok(DeltaMode::Learners),
        Some("auto") => Ok(DeltaMode::HalfResponders),
        Some("file") => Ok(DeltaMode::EdgeWeights),
        Some(s) => match s.parse::<f64>() {
            Ok(d) if d > 0.0 && d.is_finite() => Ok(DeltaMode::Constant(d)),
            _ => Err(FusionError::InvalidParameter(format!(
                "--delta expects auto, file or a positive number, got {s:?}"
            ))),
        },
    }
}

fn delta_diagnostics(mode: DeltaMode, responses: &ResponseMatrix) -> DeltaDiagnostics {
    match mode {
        DeltaMode::Learners => DeltaDiagnostics {
            mode: "learners",
            value: Some(responses.n_learners() as f64),
            per_item: None,
        },
        DeltaMode::Constant(d) => DeltaDiagnostics {
            mode: "constant",
            value: Some(d),
            per_item: None,
        },
        DeltaMode::HalfResponders => DeltaDiagnostics {
            mode: "auto",
            value: None,
            per_item: Some((0..responses.n_items()).map(|n| responses.responders(n) as f64 / 2.0).collect()),
        },
        DeltaMode::EdgeWeights => DeltaDiagnostics {
            mode: "file",
            value: None,
            per_item: None,
        },
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, mode: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| FusionError::InvalidParameter(format!("{mode} mode requires {flag}")))
}

fn fuse_iid(f: &ResponseMatrix, args: &FuseArgs) -> Result<FusionResult> {
    let k = f.n_classes();
    let mut result = match args.init {
        Init::Mm => {
            let config = MomentFitConfig {
                seed: args.seed,
                ..MomentFitConfig::default()
            };
            moment_matching(f, &config)?.1
        }
        Init::Mv => majority_vote(f),
    };
    if args.uniform_prior {
        result.prior = Prior::uniform(k);
    }
    match args.refine {
        Refine::Em => {
            let config = DsConfig {
                max_iters: args.em_iters.unwrap_or(100),
                tol: args.tol,
                estimate_prior: !args.uniform_prior,
            };
            let mut refined = ds_em(f, &result.confusions, &result.prior, &config)?;
            result.warnings.append(&mut refined.warnings);
            refined.warnings = std::mem::take(&mut result.warnings);
            Ok(refined)
        }
        Refine::None => {
            if args.uniform_prior && args.init == Init::Mm {
                result.labels = map_labels(f, &result.confusions, &result.prior)?;
                result.posteriors = ds_e_step(f, &result.confusions, &result.prior)?;
            }
            Ok(result)
        }
    }
}

fn run_pipeline(f: &ResponseMatrix, args: &FuseArgs, aux: &Aux) -> Result<FusionResult> {
    match args.mode {
        Mode::Iid => fuse_iid(f, args),
        Mode::Seq => {
            let options = SequentialOptions {
                init: args.init.into(),
                refine: args.refine == Refine::Em,
                moment: MomentFitConfig {
                    seed: args.seed,
                    ..MomentFitConfig::default()
                },
                baum_welch: BaumWelchConfig {
                    max_iters: args.em_iters.unwrap_or(100),
                    tol: args.tol,
                },
                ..SequentialOptions::default()
            };
            fuse_sequential(f, aux.partition.as_ref().expect("checked"), &options)
        }
        Mode::Net => {
            let options = NetworkedOptions {
                init: args.init.into(),
                moment: MomentFitConfig {
                    seed: args.seed,
                    ..MomentFitConfig::default()
                },
                mrf: MrfConfig {
                    delta: aux.delta,
                    t_max: args.tmax,
                    em_max_iters: args.em_iters.unwrap_or(50),
                    param_tol: args.tol,
                },
            };
            fuse_networked(f, aux.graph.as_ref().expect("checked"), &options)
        }
    }
}

struct Aux {
    partition: Option<crate::types::SequencePartition>,
    graph: Option<crate::types::DataGraph>,
    delta: DeltaMode,
}

pub fn run(args: &FuseArgs) -> Result<()> {
    if !(args.tol > 0.0) {
        return Err(FusionError::InvalidParameter("--tol must be positive".into()));
    }
    let delta = parse_delta(args.delta.as_deref())?;
    let text = read_to_string(&args.responses)?;
    let source = args.responses.display().to_string();
    let f = parse_responses(&text, args.classes, &source)?;
    let mut inputs = vec![InputDigest::new("responses", &args.responses, &text)];
    let mut aux = Aux {
        partition: None,
        graph: None,
        delta,
    };
    match args.mode {
        Mode::Iid => {}
        Mode::Seq => {
            let path = required(&args.partition, "--partition", "seq")?;
            let text = read_to_string(path)?;
            aux.partition = Some(parse_partition(&text, f.n_items(), &path.display().to_string())?);
            inputs.push(InputDigest::new("partition", path, &text));
        }
        Mode::Net => {
            let path = required(&args.graph, "--graph", "net")?;
            let text = read_to_string(path)?;
            aux.graph = Some(parse_graph(&text, f.n_items(), &path.display().to_string())?);
            inputs.push(InputDigest::new("graph", path, &text));
        }
    }

    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    let delta_diag = (args.mode == Mode::Net).then(|| delta_diagnostics(delta, &f));
    let mut manifest = Manifest {
        format_version: super::manifest::FORMAT_VERSION,
        command: "fuse".into(),
        options: args.clone(),
        seed: args.seed,
        inputs,
        outputs: Vec::new(),
    };
    let result = match run_pipeline(&f, args, &aux) {
        Ok(r) => r,
        Err(e) => {
            let diag = Diagnostics {
                mode: args.mode,
                loglik_trace: Vec::new(),
                iterations: 0,
                warnings: Vec::new(),
                delta: delta_diag,
                error: Some(e.to_string()),
            };
            write_file(dir, DIAGNOSTICS_FILE, &to_json(&diag)?)?;
            manifest.outputs = vec![DIAGNOSTICS_FILE.into()];
            manifest.write(dir)?;
            return Err(e);
        }
    };

    write_file(dir, LABELS_FILE, &format_labels(&result.labels))?;
    write_file(dir, POSTERIORS_FILE, &format_matrix_csv(&result.posteriors))?;
    let params = ParamsFile {
        confusions: result.confusions.clone(),
        prior: result.prior.clone(),
        transition: result.transition.clone(),
    };
    write_file(dir, PARAMS_FILE, &to_json(&params)?)?;
    let diag = Diagnostics {
        mode: args.mode,
        loglik_trace: result.loglik_trace.clone(),
        iterations: result.iterations,
        warnings: result.warnings.clone(),
        delta: delta_diag,
        error: None,
    };
    write_file(dir, DIAGNOSTICS_FILE, &to_json(&diag)?)?;
    manifest.outputs = [LABELS_FILE, POSTERIORS_FILE, PARAMS_FILE, DIAGNOSTICS_FILE]
        .map(String::from)
        .to_vec();
    manifest.write(dir)
}
