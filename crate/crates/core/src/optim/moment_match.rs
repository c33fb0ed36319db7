//! Moment-matching fit of confusion matrices and class priors.
//!
//! Minimizes
//!
//! ```text
//! g = Σ_m ‖μ_m − Γ_m π‖² + Σ_{m<m'} ‖S_mm' − Γ_m Π Γ_m'ᵀ‖²_F
//!   + Σ_{m<m'<m''} ‖T_mm'm'' − [[Γ_m Π, Γ_m', Γ_m'']]‖²_F
//! ```
//!
//! over column-stochastic `Γ_m` and a simplex `π` (`Π = diag(π)`) by block
//! coordinate descent. With the other blocks fixed every block objective is a
//! convex quadratic `tr(X G Xᵀ) − 2 tr(Xᵀ C)`, solved approximately by
//! projected gradient with Armijo backtracking.

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{FusionError, Result};
use crate::moments::MomentSet;
use crate::optim::permutation::{resolve_permutation, ClassPermutation};
use crate::optim::simplex::{project_columns, project_view};
use crate::types::{ConfusionMatrix, Prior};

#[derive(Debug, Clone, PartialEq)]
pub struct MomentFitConfig {
    pub max_outer_iters: usize,
    pub block_solver_iters: usize,
    /// Backtracking shrink factor.
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Stop when the relative objective decrease of an outer sweep drops
    /// below this.
    pub rel_tol: f64,
    /// Total number of runs (the first from the supplied initialization, the
    /// rest from Dirichlet-perturbed copies of it).
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MomentFitConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 200,
            block_solver_iters: 100,
            shrink: 0.5,
            armijo: 1e-4,
            rel_tol: 1e-7,
            restarts: 3,
            seed: 0,
        }
    }
}

impl MomentFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.block_solver_iters == 0 || self.restarts == 0 {
            return Err(FusionError::InvalidParameter(
                "moment fit iteration counts must be at least 1".into(),
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || self.armijo <= 0.0 || self.rel_tol <= 0.0 {
            return Err(FusionError::InvalidParameter(
                "moment fit tolerances must be positive (shrink in (0,1))".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MomentFit {
    pub confusions: Vec<ConfusionMatrix>,
    pub prior: Prior,
    pub objective: f64,
    /// Objective after each outer sweep of the winning run (starting with the
    /// initial value).
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    /// Fewer than three learners (or no co-observed triple): only mean and
    /// pair terms were fitted.
    pub degraded: bool,
    pub permutation: ClassPermutation,
}

/// Fits `{Γ_m}, π` to `moments` starting from `init`.
pub fn fit_moment_match(
    moments: &MomentSet,
    init_confusions: &[ConfusionMatrix],
    init_prior: &Prior,
    config: &MomentFitConfig,
) -> Result<MomentFit> {
    config.validate()?;
    let m = moments.n_learners();
    let k = moments.k_classes;
    if init_confusions.len() != m || init_prior.n_classes() != k {
        return Err(FusionError::Dimension(format!(
            "initialization has {} learners / {} classes, moments have {m} / {k}",
            init_confusions.len(),
            init_prior.n_classes()
        )));
    }
    let degraded = moments.triple_corrs.is_empty();
    let problem = Problem::new(moments);

    let base: Vec<Array2<f64>> = init_confusions.iter().map(|g| g.as_array().clone()).collect();
    let base_pi = init_prior.as_array().clone();

    let mut best: Option<Run> = None;
    for r in 0..config.restarts {
        let (gammas, pi) = if r == 0 {
            (base.clone(), base_pi.clone())
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
            perturb(&base, &base_pi, &mut rng)
        };
        let run = problem.solve(gammas, pi, config)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one run");

    let confusions = run
        .gammas
        .into_iter()
        .map(ConfusionMatrix::normalized)
        .collect::<Result<Vec<_>>>()?;
    let prior = Prior::normalized(run.pi)?;
    let (confusions, prior, permutation) = resolve_permutation(&confusions, &prior);
    Ok(MomentFit {
        confusions,
        prior,
        objective: run.objective,
        objective_trace: run.trace,
        outer_iters: run.outer_iters,
        degraded,
        permutation,
    })
}

/// Evaluates the moment-matching objective at the given parameters.
pub fn moment_objective(moments: &MomentSet, confusions: &[ConfusionMatrix], prior: &Prior) -> f64 {
    let gammas: Vec<Array2<f64>> = confusions.iter().map(|g| g.as_array().clone()).collect();
    Problem::new(moments).objective(&gammas, prior.as_array())
}

fn dirichlet_sym(k: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut v = Array1::from_shape_fn(k, |_| gamma.sample(rng));
    let s = v.sum();
    v /= s;
    v
}

/// Mixes every column (and the prior) halfway toward a symmetric
/// Dirichlet(10) draw.
fn perturb(
    gammas: &[Array2<f64>],
    pi: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Array2<f64>>, Array1<f64>) {
    let k = pi.len();
    let out = gammas
        .iter()
        .map(|g| {
            let mut g = g.clone();
            for mut col in g.columns_mut() {
                let d = dirichlet_sym(k, 10.0, rng);
                col *= 0.5;
                col.scaled_add(0.5, &d);
            }
            g
        })
        .collect();
    let d = dirichlet_sym(k, 10.0, rng);
    (out, pi * 0.5 + d * 0.5)
}

struct Run {
    gammas: Vec<Array2<f64>>,
    pi: Array1<f64>,
    objective: f64,
    trace: Vec<f64>,
    outer_iters: usize,
}

struct Problem<'a> {
    moments: &'a MomentSet,
    m: usize,
    k: usize,
    /// For each learner: pairs `(other, S oriented with this learner's answer
    /// on rows)`.
    pairs_of: Vec<Vec<(usize, Array2<f64>)>>,
    /// For each learner: triples containing it as `(mode, key)`.
    triples_of: Vec<Vec<(usize, (usize, usize, usize))>>,
}

impl<'a> Problem<'a> {
    fn new(moments: &'a MomentSet) -> Self {
        let m = moments.n_learners();
        let mut pairs_of = vec![Vec::new(); m];
        for (&(a, b), s) in &moments.pair_corrs {
            pairs_of[a].push((b, s.clone()));
            pairs_of[b].push((a, s.t().to_owned()));
        }
        let mut triples_of = vec![Vec::new(); m];
        for &key in moments.triple_corrs.keys() {
            triples_of[key.0].push((0, key));
            triples_of[key.1].push((1, key));
            triples_of[key.2].push((2, key));
        }
        Self {
            moments,
            m,
            k: moments.k_classes,
            pairs_of,
            triples_of,
        }
    }

    fn objective(&self, gammas: &[Array2<f64>], pi: &Array1<f64>) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for (mu, g) in self.moments.means.iter().zip(gammas) {
            let r = mu - &g.dot(pi);
            total += r.dot(&r);
        }
        for (&(a, b), s) in &self.moments.pair_corrs {
            let model = scale_cols(&gammas[a], pi).dot(&gammas[b].t());
            total += (s - &model).mapv(|v| v * v).sum();
        }
        for (&(a, b, c), t) in &self.moments.triple_corrs {
            let (ga, gb, gc) = (&gammas[a], &gammas[b], &gammas[c]);
            for i in 0..k {
                for j in 0..k {
                    for l in 0..k {
                        let mut model = 0.0;
                        for h in 0..k {
                            model += pi[h] * ga[[i, h]] * gb[[j, h]] * gc[[l, h]];
                        }
                        let r = t[[i, j, l]] - model;
                        total += r * r;
                    }
                }
            }
        }
        total
    }

    /// Quadratic block `(G, C)` for learner `j`'s confusion matrix.
    fn gamma_block(&self, j: usize, gammas: &[Array2<f64>], pi: &Array1<f64>) -> (Array2<f64>, Array2<f64>) {
        let k = self.k;
        let mut g = outer(pi, pi);
        let mut c = outer(&self.moments.means[j], pi);
        for (other, s) in &self.pairs_of[j] {
            // residual S − Γ_j (Π Γ_oᵀ): B = Π Γ_oᵀ
            let go_pi = scale_cols(&gammas[*other], pi);
            g += &go_pi.t().dot(&go_pi);
            c += &s.dot(&go_pi);
        }
        for &(mode, key) in &self.triples_of[j] {
            let t = &self.moments.triple_corrs[&key];
            let members = [key.0, key.1, key.2];
            let others: Vec<usize> = (0..3).filter(|&p| p != mode).map(|p| members[p]).collect();
            let (gu, gv) = (&gammas[others[0]], &gammas[others[1]]);
            let gram = &gu.t().dot(gu) * &gv.t().dot(gv);
            g += &scale_rows(&scale_cols(&gram, pi), pi);
            c += &scale_cols(&mttkrp(t, mode, gu, gv, k), pi);
        }
        (g, c)
    }

    /// Quadratic block `(H, b)` for the prior: `πᵀHπ − 2bᵀπ`.
    fn prior_block(&self, gammas: &[Array2<f64>]) -> (Array2<f64>, Array1<f64>) {
        let k = self.k;
        let grams: Vec<Array2<f64>> = gammas.iter().map(|g| g.t().dot(g)).collect();
        let mut h = Array2::<f64>::zeros((k, k));
        let mut b = Array1::<f64>::zeros(k);
        for (mu, (g, gram)) in self.moments.means.iter().zip(gammas.iter().zip(&grams)) {
            h += gram;
            b += &g.t().dot(mu);
        }
        for (&(x, y), s) in &self.moments.pair_corrs {
            h += &(&grams[x] * &grams[y]);
            let proj = gammas[x].t().dot(s).dot(&gammas[y]);
            b += &proj.diag();
        }
        for (&(x, y, z), t) in &self.moments.triple_corrs {
            h += &(&(&grams[x] * &grams[y]) * &grams[z]);
            let (gx, gy, gz) = (&gammas[x], &gammas[y], &gammas[z]);
            for ((i, j, l), &v) in t.indexed_iter() {
                if v == 0.0 {
                    continue;
                }
                for hh in 0..k {
                    b[hh] += v * gx[[i, hh]] * gy[[j, hh]] * gz[[l, hh]];
                }
            }
        }
        (h, b)
    }

    fn solve(&self, mut gammas: Vec<Array2<f64>>, mut pi: Array1<f64>, config: &MomentFitConfig) -> Result<Run> {
        for g in gammas.iter_mut() {
            project_columns(g);
        }
        project_view(pi.view_mut());
        let mut obj = self.objective(&gammas, &pi);
        if !obj.is_finite() {
            return Err(FusionError::Numeric("moment objective is not finite".into()));
        }
        let mut trace = vec![obj];
        let mut outer_iters = 0;
        for _ in 0..config.max_outer_iters {
            outer_iters += 1;
            for j in 0..self.m {
                let (g, c) = self.gamma_block(j, &gammas, &pi);
                let mut x = gammas[j].clone();
                quad_pg(&mut x, &c, power_iteration(&g), config, |a| a.dot(&g));
                gammas[j] = x;
            }
            let (h, b) = self.prior_block(&gammas);
            let mut x = pi.clone().insert_axis(ndarray::Axis(1));
            let c = b.insert_axis(ndarray::Axis(1));
            quad_pg(&mut x, &c, power_iteration(&h), config, |a| h.dot(a));
            pi = x.column(0).to_owned();

            let new_obj = self.objective(&gammas, &pi);
            if !new_obj.is_finite() {
                return Err(FusionError::Numeric("moment objective is not finite".into()));
            }
            trace.push(new_obj);
            let decrease = obj - new_obj;
            obj = new_obj;
            if obj <= 1e-30 || decrease <= config.rel_tol * obj.abs() {
                break;
            }
        }
        Ok(Run {
            gammas,
            pi,
            objective: obj,
            trace,
            outer_iters,
        })
    }
}

/// Projected gradient with Armijo backtracking on the quadratic
/// `f(X) = ⟨X, Q(X)⟩ − 2⟨X, C⟩`, where `Q` is symmetric PSD with largest
/// eigenvalue `lmax`.
fn quad_pg(
    x: &mut Array2<f64>,
    c: &Array2<f64>,
    lmax: f64,
    config: &MomentFitConfig,
    apply: impl Fn(&Array2<f64>) -> Array2<f64>,
) {
    let f = |x: &Array2<f64>| (x * &apply(x)).sum() - 2.0 * (x * c).sum();
    if lmax <= 0.0 {
        return;
    }
    let mut step = 1.5 / (2.0 * lmax);
    let mut fx = f(x);
    for _ in 0..config.block_solver_iters {
        let grad = (apply(x) - c) * 2.0;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &*x - &(&grad * t);
            project_columns(&mut cand);
            let fc = f(&cand);
            let dir = (&grad * &(&cand - &*x)).sum();
            if fc <= fx + config.armijo * dir {
                accepted = Some((cand, fc));
                break;
            }
            t *= config.shrink;
        }
        let Some((cand, fc)) = accepted else { break };
        let moved = (&cand - &*x).fold(0.0, |a: f64, &b| a.max(b.abs()));
        let gain = fx - fc;
        *x = cand;
        fx = fc;
        // let the next trial step grow back toward 1.5/L
        step = (t / config.shrink).min(1.5 / (2.0 * lmax));
        if moved < 1e-14 || gain <= 1e-14 * fx.abs().max(1e-300) {
            break;
        }
    }
}

/// Largest eigenvalue of a symmetric PSD matrix.
pub(crate) fn power_iteration(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.1 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / v.dot(&v).sqrt();
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // small safety margin: power iteration approaches from below
    lambda * 1.01
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn scale_cols(a: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    a * &s.view().insert_axis(ndarray::Axis(0))
}

fn scale_rows(a: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    a * &s.view().insert_axis(ndarray::Axis(1))
}

/// Matricized tensor times Khatri-Rao product for mode `mode` of a 3-way
/// tensor; `gu`, `gv` are the factors of the remaining modes in order.
fn mttkrp(t: &Array3<f64>, mode: usize, gu: &Array2<f64>, gv: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((k, k));
    for ((i0, i1, i2), &v) in t.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let (row, u, w) = match mode {
            0 => (i0, i1, i2),
            1 => (i1, i0, i2),
            _ => (i2, i0, i1),
        };
        for h in 0..k {
            out[[row, h]] += v * gu[[u, h]] * gv[[w, h]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ResponseMatrix;
    use ndarray::array;
    use std::collections::BTreeMap;

    /// Population moments of the model at the given parameters.
    fn exact_moments(gammas: &[Array2<f64>], pi: &Array1<f64>) -> MomentSet {
        let m = gammas.len();
        let k = pi.len();
        let means = gammas.iter().map(|g| g.dot(pi)).collect();
        let mut pair_corrs = BTreeMap::new();
        let mut triple_corrs = BTreeMap::new();
        for a in 0..m {
            for b in a + 1..m {
                pair_corrs.insert((a, b), scale_cols(&gammas[a], pi).dot(&gammas[b].t()));
                for c in b + 1..m {
                    let t = Array3::from_shape_fn((k, k, k), |(i, j, l)| {
                        (0..k).map(|h| pi[h] * gammas[a][[i, h]] * gammas[b][[j, h]] * gammas[c][[l, h]]).sum()
                    });
                    triple_corrs.insert((a, b, c), t);
                }
            }
        }
        MomentSet {
            k_classes: k,
            means,
            pair_counts: pair_corrs.keys().map(|&p| (p, 1)).collect(),
            triple_counts: triple_corrs.keys().map(|&p| (p, 1)).collect(),
            pair_corrs,
            triple_corrs,
            missing_pairs: vec![],
            missing_triples: vec![],
        }
    }

    #[test]
    fn zero_residual_at_identity() {
        let k = 3;
        let gammas = vec![Array2::eye(k); 4];
        let pi = Array1::from_elem(k, 1.0 / 3.0);
        let mom = exact_moments(&gammas, &pi);
        let conf: Vec<_> = gammas.iter().map(|g| ConfusionMatrix::new(g.clone()).unwrap()).collect();
        assert!(moment_objective(&mom, &conf, &Prior::uniform(k)) < 1e-30);

        // start from a blurred version of the truth
        let init: Vec<_> = (0..4)
            .map(|_| ConfusionMatrix::new(Array2::eye(k) * 0.6 + Array2::from_elem((k, k), 0.4 / k as f64)).unwrap())
            .collect();
        let fit = fit_moment_match(&mom, &init, &Prior::uniform(k), &MomentFitConfig::default()).unwrap();
        let err: f64 = fit
            .confusions
            .iter()
            .map(|g| {
                (g.as_array() - &Array2::<f64>::eye(k))
                    .columns()
                    .into_iter()
                    .map(|c| c.mapv(f64::abs).sum())
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 4.0;
        assert!(err <= 0.05, "eps_cm = {err}");
        assert!(!fit.degraded);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gammas = vec![
            array![[0.7, 0.2, 0.1], [0.2, 0.6, 0.3], [0.1, 0.2, 0.6]],
            array![[0.5, 0.3, 0.2], [0.3, 0.4, 0.1], [0.2, 0.3, 0.7]],
            array![[0.8, 0.1, 0.1], [0.1, 0.8, 0.2], [0.1, 0.1, 0.7]],
            array![[0.6, 0.2, 0.2], [0.2, 0.5, 0.2], [0.2, 0.3, 0.6]],
        ];
        let pi = array![0.5, 0.3, 0.2];
        let mom = exact_moments(&gammas, &pi);
        let p = Problem::new(&mom);
        let x = vec![
            array![[0.6, 0.3, 0.1], [0.3, 0.5, 0.3], [0.1, 0.2, 0.6]],
            gammas[1].clone(),
            gammas[2].clone(),
            gammas[3].clone(),
        ];
        let xpi = array![0.4, 0.4, 0.2];
        for j in [0usize, 2] {
            let (g, c) = p.gamma_block(j, &x, &xpi);
            let grad = (x[j].dot(&g) - &c) * 2.0;
            let h = 1e-6;
            for a in 0..3 {
                for b in 0..3 {
                    let mut plus = x.clone();
                    plus[j][[a, b]] += h;
                    let mut minus = x.clone();
                    minus[j][[a, b]] -= h;
                    let fd = (p.objective(&plus, &xpi) - p.objective(&minus, &xpi)) / (2.0 * h);
                    assert!((fd - grad[[a, b]]).abs() < 1e-6, "block {j} ({a},{b}): {fd} vs {}", grad[[a, b]]);
                }
            }
        }
        let (hm, b) = p.prior_block(&x);
        let grad = (hm.dot(&xpi) - &b) * 2.0;
        for a in 0..3 {
            let h = 1e-6;
            let mut plus = xpi.clone();
            plus[a] += h;
            let mut minus = xpi.clone();
            minus[a] -= h;
            let fd = (p.objective(&x, &plus) - p.objective(&x, &minus)) / (2.0 * h);
            assert!((fd - grad[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn objective_trace_non_increasing_and_feasible() {
        let gammas = vec![
            array![[0.7, 0.2], [0.3, 0.8]],
            array![[0.6, 0.3], [0.4, 0.7]],
            array![[0.9, 0.4], [0.1, 0.6]],
        ];
        let pi = array![0.35, 0.65];
        let mom = exact_moments(&gammas, &pi);
        let init = vec![ConfusionMatrix::uniform(2); 3];
        let init: Vec<_> = init
            .into_iter()
            .enumerate()
            .map(|(i, _)| ConfusionMatrix::new(array![[0.6 + 0.05 * i as f64, 0.45], [0.4 - 0.05 * i as f64, 0.55]]).unwrap())
            .collect();
        let cfg = MomentFitConfig { restarts: 1, ..Default::default() };
        let fit = fit_moment_match(&mom, &init, &Prior::uniform(2), &cfg).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
        }
        for g in &fit.confusions {
            for c in g.as_array().columns() {
                assert!((c.sum() - 1.0).abs() < 1e-9 && c.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn two_learners_flag_degraded_mode() {
        let f = ResponseMatrix::from_item_rows(&[vec![1, 1], vec![2, 2], vec![1, 2]], 2).unwrap();
        let mom = crate::moments::estimate_moments(&f);
        let init = vec![ConfusionMatrix::new(array![[0.7, 0.3], [0.3, 0.7]]).unwrap(); 2];
        let fit = fit_moment_match(&mom, &init, &Prior::uniform(2), &MomentFitConfig::default()).unwrap();
        assert!(fit.degraded);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = MomentFitConfig { restarts: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
