//! Fusion under independent labels: majority voting, Dawid-Skene EM and the
//! moment-matching MAP classifier.

use ndarray::{Array1, Array2, Axis};

use crate::error::{FusionError, Result};
use crate::moments::estimate_moments;
use crate::numeric::{argmax, ln_floor, log_normalize_in_place};
use crate::optim::{fit_moment_match, MomentFit, MomentFitConfig};
use crate::types::{ConfusionMatrix, FusionResult, Prior, ResponseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct DsConfig {
    pub max_iters: usize,
    /// Relative change of the observed-data log-likelihood at which EM stops.
    pub tol: f64,
    /// Re-estimate class priors in the M-step; when false the initial prior
    /// is kept fixed.
    pub estimate_prior: bool,
}

impl Default for DsConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            estimate_prior: true,
        }
    }
}

/// Plurality vote per item (ties to the lowest class). Posteriors are vote
/// fractions; confusions and prior come from hard-label counts.
pub fn majority_vote(responses: &ResponseMatrix) -> FusionResult {
    let k = responses.n_classes();
    let n = responses.n_items();
    let mut posteriors = Array2::<f64>::zeros((n, k));
    for item in 0..n {
        let mut row = posteriors.row_mut(item);
        let mut total = 0.0;
        for (_, c) in responses.item_responses(item) {
            row[c] += 1.0;
            total += 1.0;
        }
        row /= total;
    }
    let labels = FusionResult::labels_from_posteriors(&posteriors);
    let hard = one_hot(&labels, k);
    let (confusions, prior) = ds_m_step(responses, &hard);
    FusionResult {
        labels,
        posteriors,
        confusions,
        prior,
        transition: None,
        loglik_trace: Vec::new(),
        iterations: 0,
        warnings: Vec::new(),
    }
}

/// Confusion matrices and prior estimated from majority-vote hard labels;
/// the default initialization of the moment fit.
pub fn majority_vote_init(responses: &ResponseMatrix) -> (Vec<ConfusionMatrix>, Prior) {
    let mv = majority_vote(responses);
    (mv.confusions, mv.prior)
}

pub(crate) fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut q = Array2::zeros((labels.len(), k));
    for (n, &l) in labels.iter().enumerate() {
        q[[n, l - 1]] = 1.0;
    }
    q
}

/// `log P(item responses | y = k)` summed over responders, per item and class.
pub(crate) fn log_likelihoods(responses: &ResponseMatrix, confusions: &[ConfusionMatrix]) -> Array2<f64> {
    let k = responses.n_classes();
    let n = responses.n_items();
    let logs: Vec<Array2<f64>> = confusions.iter().map(|g| g.as_array().mapv(ln_floor)).collect();
    let mut out = Array2::<f64>::zeros((n, k));
    for item in 0..n {
        let mut row = out.row_mut(item);
        for (m, answer) in responses.item_responses(item) {
            row += &logs[m].row(answer);
        }
    }
    out
}

fn check_params(responses: &ResponseMatrix, confusions: &[ConfusionMatrix], prior: &Prior) -> Result<()> {
    let k = responses.n_classes();
    if confusions.len() != responses.n_learners() {
        return Err(FusionError::Dimension(format!(
            "{} confusion matrices for {} learners",
            confusions.len(),
            responses.n_learners()
        )));
    }
    if confusions.iter().any(|g| g.n_classes() != k) || prior.n_classes() != k {
        return Err(FusionError::Dimension(format!("parameters must have K = {k} classes")));
    }
    Ok(())
}

/// Posteriors and observed-data log-likelihood at the given parameters.
pub(crate) fn e_step(
    responses: &ResponseMatrix,
    confusions: &[ConfusionMatrix],
    prior: &Prior,
) -> Result<(Array2<f64>, f64)> {
    check_params(responses, confusions, prior)?;
    let mut q = log_likelihoods(responses, confusions);
    let log_prior = prior.as_array().mapv(ln_floor);
    let mut loglik = 0.0;
    for mut row in q.rows_mut() {
        row += &log_prior;
        loglik += log_normalize_in_place(row.as_slice_mut().expect("standard layout"))?;
    }
    Ok((q, loglik))
}

/// Label posteriors `q[n, k] ∝ π_k Π_m Γ_m(f_m(x_n), k)`.
pub fn ds_e_step(responses: &ResponseMatrix, confusions: &[ConfusionMatrix], prior: &Prior) -> Result<Array2<f64>> {
    e_step(responses, confusions, prior).map(|(q, _)| q)
}

/// Observed-data log-likelihood `Σ_n log Σ_k π_k Π_m Γ_m(f_m(x_n), k)`.
pub fn ds_log_likelihood(responses: &ResponseMatrix, confusions: &[ConfusionMatrix], prior: &Prior) -> Result<f64> {
    e_step(responses, confusions, prior).map(|(_, ll)| ll)
}

/// Soft-count confusion estimates restricted to responders; empty columns
/// fall back to uniform. The prior is the mean posterior.
pub fn ds_m_step(responses: &ResponseMatrix, q: &Array2<f64>) -> (Vec<ConfusionMatrix>, Prior) {
    let k = responses.n_classes();
    let confusions = soft_confusions(responses, q, &mut Vec::new());
    let prior = Prior::normalized(q.mean_axis(Axis(0)).unwrap_or_else(|| Array1::from_elem(k, 1.0 / k as f64)))
        .unwrap_or_else(|_| Prior::uniform(k));
    (confusions, prior)
}

/// Confusion update shared by every EM variant. Columns with zero soft mass
/// become uniform and are reported in `warnings`.
pub(crate) fn soft_confusions(
    responses: &ResponseMatrix,
    q: &Array2<f64>,
    warnings: &mut Vec<String>,
) -> Vec<ConfusionMatrix> {
    let k = responses.n_classes();
    let m = responses.n_learners();
    let mut counts = vec![Array2::<f64>::zeros((k, k)); m];
    for item in 0..responses.n_items() {
        let row = q.row(item);
        for (learner, answer) in responses.item_responses(item) {
            let mut r = counts[learner].row_mut(answer);
            r += &row;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(learner, mut c)| {
            for (col_idx, mut col) in c.columns_mut().into_iter().enumerate() {
                let s = col.sum();
                if s > 0.0 {
                    col /= s;
                } else {
                    col.fill(1.0 / k as f64);
                    warnings.push(format!(
                        "learner {} has no mass for class {}; column set to uniform",
                        learner + 1,
                        col_idx + 1
                    ));
                }
            }
            ConfusionMatrix::normalized(c).expect("normalized columns")
        })
        .collect()
}

/// Dawid-Skene EM from the given initialization.
pub fn ds_em(
    responses: &ResponseMatrix,
    init_confusions: &[ConfusionMatrix],
    init_prior: &Prior,
    config: &DsConfig,
) -> Result<FusionResult> {
    let mut confusions = init_confusions.to_vec();
    let mut prior = init_prior.clone();
    let (mut q, mut ll) = e_step(responses, &confusions, &prior)?;
    let mut trace = vec![ll];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        warnings.clear();
        confusions = soft_confusions(responses, &q, &mut warnings);
        if config.estimate_prior {
            prior = Prior::normalized(q.mean_axis(Axis(0)).expect("N ≥ 1"))?;
        }
        let prev = ll;
        (q, ll) = e_step(responses, &confusions, &prior)?;
        if !ll.is_finite() {
            return Err(FusionError::Numeric("log-likelihood is not finite".into()));
        }
        trace.push(ll);
        if (ll - prev).abs() <= config.tol * prev.abs() {
            break;
        }
    }
    Ok(FusionResult {
        labels: FusionResult::labels_from_posteriors(&q),
        posteriors: q,
        confusions,
        prior,
        transition: None,
        loglik_trace: trace,
        iterations,
        warnings,
    })
}

/// MAP labels `argmax_k log π_k + Σ_m log Γ_m(f_m(x_n), k)`, ties to the
/// lowest class.
pub fn map_labels(responses: &ResponseMatrix, confusions: &[ConfusionMatrix], prior: &Prior) -> Result<Vec<usize>> {
    check_params(responses, confusions, prior)?;
    let mut w = log_likelihoods(responses, confusions);
    let log_prior = prior.as_array().mapv(ln_floor);
    Ok(w
        .rows_mut()
        .into_iter()
        .map(|mut row| {
            row += &log_prior;
            argmax(row.as_slice().expect("standard layout")) + 1
        })
        .collect())
}

/// Moment-matching estimate of `{Γ_m}, π` initialized from majority voting,
/// followed by MAP labeling.
pub fn moment_matching(responses: &ResponseMatrix, config: &MomentFitConfig) -> Result<(MomentFit, FusionResult)> {
    let moments = estimate_moments(responses);
    let (init_g, init_p) = majority_vote_init(responses);
    let fit = fit_moment_match(&moments, &init_g, &init_p, config)?;
    let (posteriors, ll) = e_step(responses, &fit.confusions, &fit.prior)?;
    let labels = map_labels(responses, &fit.confusions, &fit.prior)?;
    let mut warnings = Vec::new();
    if fit.degraded {
        warnings.push(format!(
            "degraded moment fit: {} learners, third-order terms unavailable",
            responses.n_learners()
        ));
    }
    let result = FusionResult {
        labels,
        posteriors,
        confusions: fit.confusions.clone(),
        prior: fit.prior.clone(),
        transition: None,
        loglik_trace: vec![ll],
        iterations: fit.outer_iters,
        warnings,
    };
    Ok((fit, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rm(rows: &[Vec<u32>], k: usize) -> ResponseMatrix {
        ResponseMatrix::from_item_rows(rows, k).unwrap()
    }

    #[test]
    fn unanimous_vote() {
        let f = rm(&[vec![2, 2, 2], vec![1, 1, 1]], 2);
        assert_eq!(majority_vote(&f).labels, vec![2, 1]);
    }

    #[test]
    fn plurality_votes() {
        let f = rm(&[vec![1, 1, 2], vec![2, 1, 2]], 2);
        let mv = majority_vote(&f);
        assert_eq!(mv.labels, vec![1, 2]);
        assert!((mv.posteriors[[0, 0]] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vote_tie_goes_low() {
        let f = rm(&[vec![1, 2]], 2);
        assert_eq!(majority_vote(&f).labels, vec![1]);
        let f = rm(&[vec![2, 1]], 2);
        assert_eq!(majority_vote(&f).labels, vec![1]);
    }

    #[test]
    fn e_step_uniform_everything() {
        let f = rm(&[vec![1, 2], vec![2, 2], vec![1, 1]], 3);
        let g = vec![ConfusionMatrix::uniform(3); 2];
        let q = ds_e_step(&f, &g, &Prior::uniform(3)).unwrap();
        assert!(q.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn e_step_perfect_unanimous() {
        let f = rm(&[vec![2, 2, 2]], 3);
        let g = vec![ConfusionMatrix::identity(3); 3];
        let q = ds_e_step(&f, &g, &Prior::uniform(3)).unwrap();
        assert!(q[[0, 1]] >= 1.0 - 1e-6);
    }

    #[test]
    fn e_step_bayes_rule() {
        let f = rm(&[vec![1]], 2);
        let g = vec![ConfusionMatrix::new(array![[0.8, 0.3], [0.2, 0.7]]).unwrap()];
        let q = ds_e_step(&f, &g, &Prior::uniform(2)).unwrap();
        assert!((q[[0, 0]] - 0.8 / 1.1).abs() < 1e-15);
        assert!((q[[0, 1]] - 0.3 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn m_step_hard_truth_perfect() {
        let f = rm(&[vec![1, 1], vec![2, 2], vec![2, 2]], 2);
        let q = one_hot(&[1, 2, 2], 2);
        let (g, p) = ds_m_step(&f, &q);
        for gm in g {
            assert_eq!(gm, ConfusionMatrix::identity(2));
        }
        assert!((p.get(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn m_step_uniform_q_gives_answer_frequencies() {
        let f = rm(&[vec![1, 0], vec![2, 2], vec![1, 2], vec![1, 1]], 2);
        let q = Array2::from_elem((4, 2), 0.5);
        let (g, _) = ds_m_step(&f, &q);
        // learner 1 answers 1,2,1,1 ; learner 2 answers 2,2,1 (item 1 missing)
        for k in 0..2 {
            assert!((g[0].get(0, k) - 0.75).abs() < 1e-15);
            assert!((g[1].get(0, k) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn m_step_empty_column_is_uniform() {
        // learner 2 never responds on items whose truth is class 2
        let f = rm(&[vec![1, 1], vec![2, 0]], 2);
        let q = one_hot(&[1, 2], 2);
        let mut w = Vec::new();
        let g = soft_confusions(&f, &q, &mut w);
        assert_eq!(g[1].column(1).to_vec(), vec![0.5, 0.5]);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn em_stops_quickly_at_fixed_point() {
        // perfect learners: hard posteriors reproduce themselves
        let f = rm(&[vec![1, 1, 1], vec![2, 2, 2], vec![2, 2, 2], vec![1, 1, 1]], 2);
        let g = vec![ConfusionMatrix::identity(2); 3];
        let p = Prior::uniform(2);
        let r = ds_em(&f, &g, &p, &DsConfig::default()).unwrap();
        assert!(r.iterations <= 2);
        assert_eq!(r.labels, vec![1, 2, 2, 1]);
        for gm in &r.confusions {
            assert!((gm.as_array() - &Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn map_labels_single_perfect_learner() {
        let f = rm(&[vec![2], vec![1], vec![3]], 3);
        let l = map_labels(&f, &[ConfusionMatrix::identity(3)], &Prior::uniform(3)).unwrap();
        assert_eq!(l, vec![2, 1, 3]);
    }

    #[test]
    fn map_labels_prior_dominance() {
        let f = rm(&[vec![2], vec![1], vec![2]], 2);
        let weak = ConfusionMatrix::new(array![[0.5, 0.49], [0.5, 0.51]]).unwrap();
        let prior = Prior::new(array![1.0 - 1e-9, 1e-9]).unwrap();
        assert_eq!(map_labels(&f, &[weak], &prior).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = rm(&[vec![1, 2]], 2);
        let g = vec![ConfusionMatrix::identity(2)];
        assert!(matches!(ds_e_step(&f, &g, &Prior::uniform(2)), Err(FusionError::Dimension(_))));
    }

    #[test]
    fn moment_matching_two_learners_warns() {
        let f = rm(&[vec![1, 1], vec![2, 2], vec![1, 2], vec![2, 2]], 2);
        let (fit, r) = moment_matching(&f, &MomentFitConfig::default()).unwrap();
        assert!(fit.degraded);
        assert!(r.warnings.iter().any(|w| w.contains("degraded")));
    }
}
