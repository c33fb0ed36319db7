//! Transition-matrix recovery from lagged cross-correlations.
//!
//! Solves `min_{A ≥ 0, 1ᵀA1 = 1} Σ ‖S~_mm' − Γ_m A Γ_m'ᵀ‖²_F` (convex), then
//! reads off the stationary distribution as the column sums of `A` and the
//! transition matrix as `A diag(π_A)⁻¹`.

use ndarray::{Array1, Array2, Array4};

use crate::error::{FusionError, Result};
use crate::moments::LaggedMomentSet;
use crate::optim::moment_match::power_iteration;
use crate::optim::simplex::project_scaled_simplex;
use crate::types::{ConfusionMatrix, Prior, TransitionMatrix};

/// Column mass below which the corresponding transition column is
/// unidentifiable and replaced by the uniform distribution.
pub const MIN_STATE_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionFitConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for TransitionFitConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransitionFit {
    pub transition: TransitionMatrix,
    /// Stationary distribution implied by `A` (its column sums).
    pub stationary: Prior,
    /// The fitted joint `A = T diag(π)`.
    pub joint: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// The quadratic `f(A) = c − 2⟨B, A⟩ + ⟨A, H(A)⟩` with
/// `H(A)[i,j] = Σ_pairs (Γ_mᵀΓ_m A Γ_m'ᵀΓ_m')[i,j]`.
pub struct TransitionObjective {
    k: usize,
    hess: Array4<f64>,
    lin: Array2<f64>,
    constant: f64,
    lmax: f64,
}

impl TransitionObjective {
    pub fn new(lagged: &LaggedMomentSet, confusions: &[ConfusionMatrix]) -> Result<Self> {
        let k = lagged.k_classes;
        if lagged.lag_corrs.is_empty() {
            return Err(FusionError::Degenerate("no lagged moments".into()));
        }
        if confusions.iter().any(|g| g.n_classes() != k) {
            return Err(FusionError::Dimension("confusion matrices must be K×K".into()));
        }
        let grams: Vec<Array2<f64>> = confusions.iter().map(|g| g.as_array().t().dot(g.as_array())).collect();
        let mut hess = Array4::<f64>::zeros((k, k, k, k));
        let mut lin = Array2::<f64>::zeros((k, k));
        let mut constant = 0.0;
        for (&(a, b), s) in &lagged.lag_corrs {
            if a >= confusions.len() || b >= confusions.len() {
                return Err(FusionError::Dimension(format!(
                    "lagged moments reference learner {} but only {} confusion matrices given",
                    a.max(b) + 1,
                    confusions.len()
                )));
            }
            let (ga, gb) = (confusions[a].as_array(), confusions[b].as_array());
            lin += &ga.t().dot(s).dot(gb);
            constant += s.iter().map(|v| v * v).sum::<f64>();
            let (pa, pb) = (&grams[a], &grams[b]);
            // (Pa A Pb)[i,j] = Σ_{p,q} Pa[i,p] A[p,q] Pb[q,j]
            for i in 0..k {
                for j in 0..k {
                    for p in 0..k {
                        for q in 0..k {
                            hess[[i, j, p, q]] += pa[[i, p]] * pb[[q, j]];
                        }
                    }
                }
            }
        }
        let flat = hess
            .clone()
            .into_shape_with_order((k * k, k * k))
            .expect("contiguous");
        let lmax = power_iteration(&flat);
        Ok(Self {
            k,
            hess,
            lin,
            constant,
            lmax,
        })
    }

    fn apply(&self, a: &Array2<f64>) -> Array2<f64> {
        let k = self.k;
        Array2::from_shape_fn((k, k), |(i, j)| {
            let mut s = 0.0;
            for p in 0..k {
                for q in 0..k {
                    s += self.hess[[i, j, p, q]] * a[[p, q]];
                }
            }
            s
        })
    }

    pub fn value(&self, a: &Array2<f64>) -> f64 {
        (self.constant - 2.0 * (&self.lin * a).sum() + (a * &self.apply(a)).sum()).max(0.0)
    }

    fn gradient(&self, a: &Array2<f64>) -> Array2<f64> {
        (self.apply(a) - &self.lin) * 2.0
    }
}

/// Fits the transition matrix from lagged moments and confusion estimates,
/// starting from the uniform joint.
pub fn fit_transition(lagged: &LaggedMomentSet, confusions: &[ConfusionMatrix]) -> Result<TransitionFit> {
    let k = lagged.k_classes;
    let start = Array2::from_elem((k, k), 1.0 / (k * k) as f64);
    fit_transition_from(lagged, confusions, &start, &TransitionFitConfig::default())
}

/// Accelerated projected gradient (FISTA with function-value restart) from a
/// given joint `start`; the best iterate is returned, so the final objective
/// never increases with more iterations.
pub fn fit_transition_from(
    lagged: &LaggedMomentSet,
    confusions: &[ConfusionMatrix],
    start: &Array2<f64>,
    config: &TransitionFitConfig,
) -> Result<TransitionFit> {
    if config.max_iters == 0 || config.rel_tol <= 0.0 {
        return Err(FusionError::InvalidParameter("transition fit needs max_iters ≥ 1 and rel_tol > 0".into()));
    }
    let obj = TransitionObjective::new(lagged, confusions)?;
    let mut x = project_scaled_simplex(start);
    let mut fx = obj.value(&x);
    let (joint, objective, iterations) = if obj.lmax <= 0.0 {
        (x, fx, 0)
    } else {
        let step = 1.0 / (2.0 * obj.lmax);
        let mut y = x.clone();
        let mut momentum = 1.0f64;
        let mut best = (x.clone(), fx);
        let mut iters = 0;
        let mut stalled = 0;
        for _ in 0..config.max_iters {
            iters += 1;
            let next = project_scaled_simplex(&(&y - &(obj.gradient(&y) * step)));
            let fnext = obj.value(&next);
            if fnext > fx {
                // restart momentum from the current point
                momentum = 1.0;
                y = x.clone();
                continue;
            }
            let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            y = &next + &((&next - &x) * ((momentum - 1.0) / m_next));
            momentum = m_next;
            let decrease = fx - fnext;
            x = next;
            fx = fnext;
            if fx < best.1 {
                best = (x.clone(), fx);
            }
            if fx <= 1e-30 {
                break;
            }
            if decrease <= config.rel_tol * fx {
                stalled += 1;
                if stalled >= 10 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }
        (best.0, best.1, iters)
    };
    let (transition, stationary, warnings) = recover_transition(&joint)?;
    Ok(TransitionFit {
        transition,
        stationary,
        joint,
        objective,
        iterations,
        warnings,
    })
}

/// `π = 1ᵀA`, `T = A diag(π)⁻¹`; columns with negligible mass become uniform.
pub fn recover_transition(joint: &Array2<f64>) -> Result<(TransitionMatrix, Prior, Vec<String>)> {
    let k = joint.nrows();
    let pi: Array1<f64> = joint.sum_axis(ndarray::Axis(0));
    let mut warnings = Vec::new();
    let mut t = Array2::<f64>::zeros((k, k));
    for c in 0..k {
        if pi[c] < MIN_STATE_MASS {
            warnings.push(format!(
                "rank deficiency: state {} has stationary mass {:.3e}; its transition column set to uniform",
                c + 1,
                pi[c]
            ));
            t.column_mut(c).fill(1.0 / k as f64);
        } else {
            let col = joint.column(c).mapv(|v| v.max(0.0) / pi[c]);
            t.column_mut(c).assign(&col);
        }
    }
    let transition = TransitionMatrix::normalized(t)?;
    let stationary = Prior::normalized(pi.mapv(|v| v.max(0.0)))?;
    Ok((transition, stationary, warnings))
}
