//! Hidden-Markov fusion of sequentially dependent labels: emissions,
//! scaled forward-backward, Viterbi decoding and Baum-Welch refinement.
//!
//! Transition matrices are column-stochastic with `T(next, prev)` throughout.

use ndarray::{Array1, Array2};

use crate::error::{FusionError, Result};
use crate::iid::{log_likelihoods, majority_vote_init, moment_matching, soft_confusions};
use crate::moments::estimate_lagged_moments;
use crate::numeric::{argmax, ln_floor};
use crate::optim::{fit_transition_from, MomentFitConfig, TransitionFitConfig};
use crate::types::{ConfusionMatrix, FusionResult, Prior, ResponseMatrix, SequencePartition, TransitionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub transition: TransitionMatrix,
    /// Distribution of the first label of every segment.
    pub initial: Prior,
    pub confusions: Vec<ConfusionMatrix>,
}

impl HmmParams {
    pub fn n_classes(&self) -> usize {
        self.initial.n_classes()
    }
}

/// Smoothed posteriors from forward-backward.
#[derive(Debug, Clone)]
pub struct SmoothedStats {
    /// N×K marginals `P(y_n = k | F)`.
    pub q: Array2<f64>,
    /// `(n, ξ_n)` for every within-segment pair, with
    /// `ξ_n(k, k') = P(y_n = k, y_{n+1} = k' | F)`.
    pub xi: Vec<(usize, Array2<f64>)>,
    pub loglik: f64,
}

/// `log b[n, k] = Σ_m log Γ_m(f_m(x_n), k)` over the responders of item `n`.
pub fn emission_logprobs(responses: &ResponseMatrix, confusions: &[ConfusionMatrix]) -> Result<Array2<f64>> {
    if confusions.len() != responses.n_learners() {
        return Err(FusionError::Dimension(format!(
            "{} confusion matrices for {} learners",
            confusions.len(),
            responses.n_learners()
        )));
    }
    if confusions.iter().any(|g| g.n_classes() != responses.n_classes()) {
        return Err(FusionError::Dimension("confusion matrices have the wrong K".into()));
    }
    Ok(log_likelihoods(responses, confusions))
}

fn check_inputs(log_b: &Array2<f64>, params: &HmmParams, partition: &SequencePartition) -> Result<()> {
    if log_b.nrows() != partition.n_items() {
        return Err(FusionError::Dimension(format!(
            "{} emission rows for a partition of {} items",
            log_b.nrows(),
            partition.n_items()
        )));
    }
    let k = params.n_classes();
    if log_b.ncols() != k || params.transition.n_classes() != k {
        return Err(FusionError::Dimension(format!("HMM parameters must have K = {k} classes")));
    }
    Ok(())
}

/// Scaled forward-backward over every segment of `partition`.
pub fn forward_backward(
    log_b: &Array2<f64>,
    params: &HmmParams,
    partition: &SequencePartition,
) -> Result<SmoothedStats> {
    check_inputs(log_b, params, partition)?;
    let k = params.n_classes();
    let n_items = log_b.nrows();
    let t = params.transition.as_array();
    let init = params.initial.as_array();

    // emissions shifted by their row max; offsets return in the likelihood
    let mut b = Array2::<f64>::zeros((n_items, k));
    let mut loglik = 0.0;
    for (n, row) in log_b.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        if !max.is_finite() {
            return Err(FusionError::Numeric(format!("item {} has no finite emission", n + 1)));
        }
        loglik += max;
        b.row_mut(n).assign(&row.mapv(|v| (v - max).exp()));
    }

    let mut alpha = Array2::<f64>::zeros((n_items, k));
    let mut beta = Array2::<f64>::zeros((n_items, k));
    let mut scale = vec![0.0; n_items];
    let mut q = Array2::<f64>::zeros((n_items, k));
    let mut xi = Vec::new();

    let normalize = |v: &mut Array1<f64>, n: usize| -> Result<f64> {
        let c = v.sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(FusionError::Numeric(format!("zero forward scaling at item {}", n + 1)));
        }
        *v /= c;
        Ok(c)
    };

    for seg in partition.segments() {
        let (start, end) = (seg.start, seg.end);
        let mut a = init * &b.row(start);
        scale[start] = normalize(&mut a, start)?;
        alpha.row_mut(start).assign(&a);
        for n in start + 1..end {
            let mut a = t.dot(&alpha.row(n - 1)) * b.row(n);
            scale[n] = normalize(&mut a, n)?;
            alpha.row_mut(n).assign(&a);
        }
        beta.row_mut(end - 1).fill(1.0);
        for n in (start..end - 1).rev() {
            let w = &b.row(n + 1) * &beta.row(n + 1);
            let next = t.t().dot(&w) / scale[n + 1];
            beta.row_mut(n).assign(&next);
        }
        for n in seg.clone() {
            loglik += scale[n].ln();
            let mut row = &alpha.row(n) * &beta.row(n);
            let s = row.sum();
            row /= s;
            q.row_mut(n).assign(&row);
        }
        for n in start..end - 1 {
            let w = &b.row(n + 1) * &beta.row(n + 1);
            // ξ(k, k') = α_n(k) T(k', k) b_{n+1}(k') β_{n+1}(k')
            let mut x = Array2::from_shape_fn((k, k), |(i, j)| alpha[[n, i]] * t[[j, i]] * w[j]);
            let s = x.sum();
            if !(s > 0.0) {
                return Err(FusionError::Numeric(format!("zero pair posterior at item {}", n + 1)));
            }
            x /= s;
            xi.push((n, x));
        }
    }
    Ok(SmoothedStats { q, xi, loglik })
}

/// Log of the joint `P(y, F)` for a given 1-based label sequence.
pub fn sequence_log_joint(
    log_b: &Array2<f64>,
    params: &HmmParams,
    partition: &SequencePartition,
    labels: &[usize],
) -> Result<f64> {
    check_inputs(log_b, params, partition)?;
    if labels.len() != log_b.nrows() {
        return Err(FusionError::Dimension("label sequence length differs from N".into()));
    }
    let t = params.transition.as_array();
    let mut total = 0.0;
    for seg in partition.segments() {
        for n in seg.clone() {
            let y = labels[n] - 1;
            total += if n == seg.start {
                ln_floor(params.initial.get(y))
            } else {
                ln_floor(t[[y, labels[n - 1] - 1]])
            };
            total += log_b[[n, y]];
        }
    }
    Ok(total)
}

/// Most probable label sequence per segment (log domain, floored
/// probabilities). Ties go to the lowest class index.
pub fn viterbi(log_b: &Array2<f64>, params: &HmmParams, partition: &SequencePartition) -> Result<Vec<usize>> {
    check_inputs(log_b, params, partition)?;
    let k = params.n_classes();
    let log_t = params.transition.as_array().mapv(ln_floor);
    let log_init = params.initial.as_array().mapv(ln_floor);
    let mut labels = vec![0; log_b.nrows()];
    let mut back = Array2::<usize>::zeros((log_b.nrows(), k));
    for seg in partition.segments() {
        let mut delta: Vec<f64> = (0..k).map(|c| log_init[c] + log_b[[seg.start, c]]).collect();
        for n in seg.start + 1..seg.end {
            let mut next = vec![0.0; k];
            for c in 0..k {
                let scores: Vec<f64> = (0..k).map(|p| delta[p] + log_t[[c, p]]).collect();
                let best = argmax(&scores);
                back[[n, c]] = best;
                next[c] = scores[best] + log_b[[n, c]];
            }
            delta = next;
        }
        let mut state = argmax(&delta);
        for n in seg.clone().rev() {
            labels[n] = state + 1;
            if n > seg.start {
                state = back[[n, state]];
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change at which iterations stop.
    pub tol: f64,
}

impl Default for BaumWelchConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaumWelchFit {
    pub params: HmmParams,
    pub stats: SmoothedStats,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

fn hmm_m_step(
    responses: &ResponseMatrix,
    partition: &SequencePartition,
    stats: &SmoothedStats,
    warnings: &mut Vec<String>,
) -> Result<HmmParams> {
    let k = responses.n_classes();
    // counts(next, prev) = Σ_n ξ_n(prev, next)
    let mut counts = Array2::<f64>::zeros((k, k));
    for (_, x) in &stats.xi {
        counts += &x.t();
    }
    for (prev, mut col) in counts.columns_mut().into_iter().enumerate() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            col.fill(1.0 / k as f64);
            warnings.push(format!("class {} never leads a transition; column set to uniform", prev + 1));
        }
    }
    let transition = TransitionMatrix::normalized(counts)?;
    let confusions = soft_confusions(responses, &stats.q, warnings);
    let mut first = Array1::<f64>::zeros(k);
    for seg in partition.segments() {
        first += &stats.q.row(seg.start);
    }
    let initial = Prior::normalized(first)?;
    Ok(HmmParams {
        transition,
        initial,
        confusions,
    })
}

/// EM refinement of all HMM parameters, including the initial distribution
/// (re-estimated from segment-initial posteriors).
pub fn baum_welch(
    responses: &ResponseMatrix,
    partition: &SequencePartition,
    init: &HmmParams,
    config: &BaumWelchConfig,
) -> Result<BaumWelchFit> {
    let mut params = init.clone();
    let mut stats = forward_backward(&emission_logprobs(responses, &params.confusions)?, &params, partition)?;
    let mut trace = vec![stats.loglik];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        warnings.clear();
        params = hmm_m_step(responses, partition, &stats, &mut warnings)?;
        let prev = stats.loglik;
        stats = forward_backward(&emission_logprobs(responses, &params.confusions)?, &params, partition)?;
        if !stats.loglik.is_finite() {
            return Err(FusionError::Numeric("log-likelihood is not finite".into()));
        }
        trace.push(stats.loglik);
        if (stats.loglik - prev).abs() <= config.tol * prev.abs() {
            break;
        }
    }
    Ok(BaumWelchFit {
        params,
        stats,
        loglik_trace: trace,
        iterations,
        warnings,
    })
}

/// Source of the initial confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    #[default]
    MomentMatching,
    MajorityVote,
}

#[derive(Debug, Clone, Default)]
pub struct SequentialOptions {
    pub init: InitMethod,
    /// Run Baum-Welch after the moment-based estimate.
    pub refine: bool,
    pub moment: MomentFitConfig,
    pub transition: TransitionFitConfig,
    pub baum_welch: BaumWelchConfig,
}

/// End-to-end sequential fusion: confusion estimates, transition fit from
/// lagged moments, Viterbi decoding and optional Baum-Welch refinement.
pub fn fuse_sequential(
    responses: &ResponseMatrix,
    partition: &SequencePartition,
    options: &SequentialOptions,
) -> Result<FusionResult> {
    if partition.n_items() != responses.n_items() {
        return Err(FusionError::Dimension(format!(
            "partition covers {} items, responses have {}",
            partition.n_items(),
            responses.n_items()
        )));
    }
    let k = responses.n_classes();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let (confusions, prior) = match options.init {
        InitMethod::MomentMatching => {
            let (fit, result) = moment_matching(responses, &options.moment)?;
            warnings.extend(result.warnings);
            iterations += fit.outer_iters;
            (fit.confusions, fit.prior)
        }
        InitMethod::MajorityVote => majority_vote_init(responses),
    };
    let lagged = estimate_lagged_moments(responses, partition)?;
    let start = Array2::from_elem((k, k), 1.0 / (k * k) as f64);
    let tfit = fit_transition_from(&lagged, &confusions, &start, &options.transition)?;
    warnings.extend(tfit.warnings);
    iterations += tfit.iterations;

    let mut params = HmmParams {
        transition: tfit.transition,
        initial: prior,
        confusions,
    };
    let mut trace = Vec::new();
    if options.refine {
        let bw = baum_welch(responses, partition, &params, &options.baum_welch)?;
        warnings.extend(bw.warnings);
        warnings.push("initial distribution re-estimated from segment-initial posteriors".into());
        iterations += bw.iterations;
        trace = bw.loglik_trace;
        params = bw.params;
    }
    let log_b = emission_logprobs(responses, &params.confusions)?;
    let labels = viterbi(&log_b, &params, partition)?;
    let stats = forward_backward(&log_b, &params, partition)?;
    if trace.is_empty() {
        trace.push(stats.loglik);
    }
    Ok(FusionResult {
        labels,
        posteriors: stats.q,
        confusions: params.confusions,
        prior: params.initial,
        transition: Some(params.transition),
        loglik_trace: trace,
        iterations,
        warnings,
    })
}

/// Viterbi labels under known parameters; the oracle reference in
/// simulations.
pub fn decode_with(responses: &ResponseMatrix, partition: &SequencePartition, params: &HmmParams) -> Result<Vec<usize>> {
    let log_b = emission_logprobs(responses, &params.confusions)?;
    viterbi(&log_b, params, partition)
}
