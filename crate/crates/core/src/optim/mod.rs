//! Simplex-constrained least-squares machinery.

pub mod moment_match;
pub mod permutation;
pub mod simplex;
pub mod transition;

pub use moment_match::{fit_moment_match, moment_objective, MomentFit, MomentFitConfig};
pub use permutation::{max_weight_assignment, resolve_permutation, ClassPermutation};
pub use simplex::{project_scaled_simplex, project_simplex};
pub use transition::{
    fit_transition, fit_transition_from, recover_transition, TransitionFit, TransitionFitConfig,
};
