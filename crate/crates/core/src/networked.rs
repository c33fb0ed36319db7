//! Markov-random-field fusion of networked labels: Potts clique energies,
//! iterated conditional modes and MRF-EM.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::iid::{log_likelihoods, majority_vote, map_labels, moment_matching, soft_confusions};
use crate::numeric::{argmax, log_normalize_in_place};
use crate::optim::MomentFitConfig;
use crate::sequential::InitMethod;
use crate::types::{ConfusionMatrix, DataGraph, FusionResult, Prior, ResponseMatrix};

/// How the edge strengths `δ_nn'` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DeltaMode {
    /// `δ = M` on every edge.
    #[default]
    Learners,
    /// The same positive constant on every edge.
    Constant(f64),
    /// `δ = M_n / 2` where `M_n` counts the learners that responded on the
    /// node whose energy is evaluated.
    HalfResponders,
    /// Weights read from the graph file.
    EdgeWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfConfig {
    pub delta: DeltaMode,
    /// Cap on ICM sweeps.
    pub t_max: usize,
    pub em_max_iters: usize,
    /// Max-norm confusion change below which EM may stop (labels must also
    /// be stable).
    pub param_tol: f64,
}

impl Default for MrfConfig {
    fn default() -> Self {
        Self {
            delta: DeltaMode::Learners,
            t_max: 20,
            em_max_iters: 50,
            param_tol: 1e-6,
        }
    }
}

impl MrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(FusionError::InvalidParameter("t_max must be at least 1".into()));
        }
        if let DeltaMode::Constant(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(FusionError::InvalidParameter(format!("delta must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Per-node edge strengths, aligned with [`DataGraph::neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDeltas(Vec<Vec<f64>>);

impl EdgeDeltas {
    pub fn resolve(graph: &DataGraph, responses: &ResponseMatrix, mode: DeltaMode) -> Result<Self> {
        if graph.n_nodes() != responses.n_items() {
            return Err(FusionError::Dimension(format!(
                "graph has {} nodes, responses have {} items",
                graph.n_nodes(),
                responses.n_items()
            )));
        }
        let m = responses.n_learners() as f64;
        let rows = (0..graph.n_nodes())
            .map(|n| {
                graph
                    .neighbors(n)
                    .iter()
                    .map(|&(_, w)| match mode {
                        DeltaMode::Learners => Ok(m),
                        DeltaMode::Constant(d) => Ok(d),
                        DeltaMode::HalfResponders => Ok(responses.responders(n) as f64 / 2.0),
                        DeltaMode::EdgeWeights => w.ok_or_else(|| {
                            FusionError::InvalidParameter("per-edge delta requested but an edge has no weight".into())
                        }),
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(rows))
    }

    pub fn constant(graph: &DataGraph, delta: f64) -> Self {
        Self((0..graph.n_nodes()).map(|n| vec![delta; graph.neighbors(n).len()]).collect())
    }

    pub fn node(&self, n: usize) -> &[f64] {
        &self.0[n]
    }
}

/// `U_n(k) = ½ Σ_{n'∈N(n)} δ_nn' · 1[k ≠ labels[n']]`; `n` is a 0-based item
/// index, `k` and `labels` are 1-based classes.
pub fn local_energy(graph: &DataGraph, deltas: &EdgeDeltas, labels: &[usize], n: usize, k: usize) -> f64 {
    0.5 * graph
        .neighbors(n)
        .iter()
        .zip(deltas.node(n))
        .filter(|((nb, _), _)| labels[*nb] != k)
        .map(|(_, d)| d)
        .sum::<f64>()
}

/// All energies `U_n(k)` as an N×K matrix.
fn energies(graph: &DataGraph, deltas: &EdgeDeltas, labels: &[usize], k: usize) -> Array2<f64> {
    let mut u = Array2::zeros((labels.len(), k));
    for (n, mut row) in u.axis_iter_mut(Axis(0)).enumerate() {
        for c in 0..k {
            row[c] = local_energy(graph, deltas, labels, n, c + 1);
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcmOutcome {
    pub labels: Vec<usize>,
    pub sweeps: usize,
    /// False when `t_max` was reached with labels still changing.
    pub converged: bool,
}

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(FusionError::Dimension(format!("{} labels for {} items", labels.len(), n)));
    }
    if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > k) {
        return Err(FusionError::InvalidParameter(format!("label {bad} outside 1..={k}")));
    }
    Ok(())
}

fn icm_with(
    log_b: &Array2<f64>,
    graph: &DataGraph,
    deltas: &EdgeDeltas,
    init_labels: &[usize],
    t_max: usize,
) -> IcmOutcome {
    let k = log_b.ncols();
    let mut labels = init_labels.to_vec();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < t_max {
        sweeps += 1;
        let prev = &labels;
        let next: Vec<usize> = (0..labels.len())
            .into_par_iter()
            .map(|n| {
                let score: Vec<f64> = (0..k)
                    .map(|c| log_b[[n, c]] - local_energy(graph, deltas, prev, n, c + 1))
                    .collect();
                argmax(&score) + 1
            })
            .collect();
        let changed = next != labels;
        labels = next;
        if !changed {
            converged = true;
            break;
        }
    }
    IcmOutcome {
        labels,
        sweeps,
        converged,
    }
}

/// Synchronous ICM: each sweep gives every item the class minimizing
/// `U_n(k) − Σ_m log Γ_m(f_m(x_n), k)` against the previous sweep's
/// neighbor labels. Ties go to the lowest class.
pub fn icm(
    responses: &ResponseMatrix,
    confusions: &[ConfusionMatrix],
    graph: &DataGraph,
    deltas: &EdgeDeltas,
    init_labels: &[usize],
    t_max: usize,
) -> Result<IcmOutcome> {
    check_labels(init_labels, responses.n_items(), responses.n_classes())?;
    check_confusions(responses, confusions)?;
    Ok(icm_with(&log_likelihoods(responses, confusions), graph, deltas, init_labels, t_max))
}

fn check_confusions(responses: &ResponseMatrix, confusions: &[ConfusionMatrix]) -> Result<()> {
    if confusions.len() != responses.n_learners() || confusions.iter().any(|g| g.n_classes() != responses.n_classes()) {
        return Err(FusionError::Dimension("confusion matrices do not match the responses".into()));
    }
    Ok(())
}

fn posteriors_with(log_b: &Array2<f64>, graph: &DataGraph, deltas: &EdgeDeltas, labels: &[usize]) -> Result<Array2<f64>> {
    let mut q = log_b - &energies(graph, deltas, labels, log_b.ncols());
    for mut row in q.rows_mut() {
        log_normalize_in_place(row.as_slice_mut().expect("standard layout"))?;
    }
    Ok(q)
}

/// `q[n, k] ∝ exp(−U_n(k) + Σ_m log Γ_m(f_m(x_n), k))` given neighbor labels.
pub fn mrf_posteriors(
    responses: &ResponseMatrix,
    confusions: &[ConfusionMatrix],
    graph: &DataGraph,
    deltas: &EdgeDeltas,
    labels: &[usize],
) -> Result<Array2<f64>> {
    check_labels(labels, responses.n_items(), responses.n_classes())?;
    check_confusions(responses, confusions)?;
    posteriors_with(&log_likelihoods(responses, confusions), graph, deltas, labels)
}

fn max_change(a: &[ConfusionMatrix], b: &[ConfusionMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_array().iter().zip(y.as_array().iter()).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// EM for networked data: ICM labels, MRF posteriors and the
/// responder-restricted confusion update, until labels are stable and
/// confusions move less than `param_tol`.
pub fn mrf_em(
    responses: &ResponseMatrix,
    graph: &DataGraph,
    init_labels: &[usize],
    init_confusions: &[ConfusionMatrix],
    config: &MrfConfig,
) -> Result<FusionResult> {
    config.validate()?;
    check_labels(init_labels, responses.n_items(), responses.n_classes())?;
    check_confusions(responses, init_confusions)?;
    let deltas = EdgeDeltas::resolve(graph, responses, config.delta)?;
    let mut labels = init_labels.to_vec();
    let mut confusions = init_confusions.to_vec();
    let mut q = Array2::zeros((responses.n_items(), responses.n_classes()));
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut icm_unconverged = 0;
    for _ in 0..config.em_max_iters.max(1) {
        iterations += 1;
        warnings.clear();
        let log_b = log_likelihoods(responses, &confusions);
        let outcome = icm_with(&log_b, graph, &deltas, &labels, config.t_max);
        if !outcome.converged {
            icm_unconverged += 1;
        }
        q = posteriors_with(&log_b, graph, &deltas, &outcome.labels)?;
        let updated = soft_confusions(responses, &q, &mut warnings);
        let stable = outcome.labels == labels;
        let change = max_change(&updated, &confusions);
        labels = outcome.labels;
        confusions = updated;
        if stable && change < config.param_tol {
            break;
        }
    }
    if icm_unconverged > 0 {
        warnings.push(format!("ICM reached t_max in {icm_unconverged} outer iterations"));
    }
    let prior = Prior::normalized(q.mean_axis(Axis(0)).expect("N ≥ 1"))?;
    Ok(FusionResult {
        labels,
        posteriors: q,
        confusions,
        prior,
        transition: None,
        loglik_trace: Vec::new(),
        iterations,
        warnings,
    })
}

#[derive(Debug, Clone, Default)]
pub struct NetworkedOptions {
    pub init: InitMethod,
    pub moment: MomentFitConfig,
    pub mrf: MrfConfig,
}

/// End-to-end networked fusion: moment-matching (or majority-vote)
/// initialization, MAP labels, then MRF-EM.
pub fn fuse_networked(responses: &ResponseMatrix, graph: &DataGraph, options: &NetworkedOptions) -> Result<FusionResult> {
    let mut warnings = Vec::new();
    let (confusions, labels) = match options.init {
        InitMethod::MomentMatching => {
            let (fit, result) = moment_matching(responses, &options.moment)?;
            warnings.extend(result.warnings);
            let labels = map_labels(responses, &fit.confusions, &fit.prior)?;
            (fit.confusions, labels)
        }
        InitMethod::MajorityVote => {
            let mv = majority_vote(responses);
            (mv.confusions, mv.labels)
        }
    };
    let mut result = mrf_em(responses, graph, &labels, &confusions, &options.mrf)?;
    warnings.append(&mut result.warnings);
    result.warnings = warnings;
    Ok(result)
}
