//! Class-permutation resolution for factor estimates.
//!
//! Moment fits recover the confusion matrices only up to a common permutation
//! of the hidden-class axis (the columns). The permutation that maximizes the
//! diagonal mass of the learner-averaged confusion matrix is selected by
//! optimal assignment.

use ndarray::{Array1, Array2};

use crate::types::{ConfusionMatrix, Prior, TransitionMatrix};

/// Maximum-weight perfect assignment on a square matrix (Hungarian method,
/// O(K³)). Returns `assign[row] = column`.
pub fn max_weight_assignment(w: &Array2<f64>) -> Vec<usize> {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "assignment matrix must be square");
    // min-cost on negated weights; 1-based arrays with sentinel column 0
    let cost = |i: usize, j: usize| -w[[i - 1, j - 1]];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Column reordering chosen by [`resolve_permutation`]: new class `k` is old
/// class `perm[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPermutation(pub Vec<usize>);

impl ClassPermutation {
    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply_confusion(&self, g: &ConfusionMatrix) -> ConfusionMatrix {
        let a = g.as_array();
        let out = Array2::from_shape_fn(a.dim(), |(r, c)| a[[r, self.0[c]]]);
        ConfusionMatrix::new(out).expect("column permutation preserves stochasticity")
    }

    pub fn apply_prior(&self, p: &Prior) -> Prior {
        let a = p.as_array();
        Prior::new(Array1::from_shape_fn(a.len(), |k| a[self.0[k]])).expect("permutation")
    }

    /// Hidden classes index both axes of a transition matrix.
    pub fn apply_transition(&self, t: &TransitionMatrix) -> TransitionMatrix {
        let a = t.as_array();
        let out = Array2::from_shape_fn(a.dim(), |(r, c)| a[[self.0[r], self.0[c]]]);
        TransitionMatrix::new(out).expect("permutation preserves stochasticity")
    }
}

/// Relabels hidden classes so the averaged confusion matrix has maximal
/// diagonal mass. Only columns (hidden class) and the prior are permuted;
/// rows index observed answers and stay fixed.
pub fn resolve_permutation(
    confusions: &[ConfusionMatrix],
    prior: &Prior,
) -> (Vec<ConfusionMatrix>, Prior, ClassPermutation) {
    let k = prior.n_classes();
    let mut avg = Array2::<f64>::zeros((k, k));
    for g in confusions {
        avg += g.as_array();
    }
    if !confusions.is_empty() {
        avg /= confusions.len() as f64;
    }
    // row k of the assignment picks the old column that becomes class k
    let perm = ClassPermutation(max_weight_assignment(&avg));
    let out = confusions.iter().map(|g| perm.apply_confusion(g)).collect();
    let prior = perm.apply_prior(prior);
    (out, prior, perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn score(w: &Array2<f64>, a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(r, &c)| w[[r, c]]).sum()
    }

    #[test]
    fn diagonally_dominant_is_identity() {
        let g = ConfusionMatrix::new(array![[0.7, 0.2], [0.3, 0.8]]).unwrap();
        let (_, _, perm) = resolve_permutation(&[g.clone(), g], &Prior::uniform(2));
        assert!(perm.is_identity());
    }

    #[test]
    fn swapped_identity_restored() {
        let swapped = ConfusionMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let prior = Prior::new(array![0.3, 0.7]).unwrap();
        let (out, p, perm) = resolve_permutation(&[swapped.clone(), swapped], &prior);
        assert_eq!(perm.0, vec![1, 0]);
        for g in out {
            assert_eq!(g, ConfusionMatrix::identity(2));
        }
        assert_eq!(p.as_array(), &array![0.7, 0.3]);
    }

    #[test]
    fn averaged_matrix_example() {
        // 0.7 + 0.8 > 0.2 + 0.3
        let g = ConfusionMatrix::new(array![[0.2, 0.7], [0.8, 0.3]]).unwrap();
        let (_, _, perm) = resolve_permutation(&[g], &Prior::uniform(2));
        assert_eq!(perm.0, vec![1, 0]);
    }

    #[test]
    fn transition_permuted_on_both_axes() {
        let t = TransitionMatrix::new(array![[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let p = ClassPermutation(vec![1, 0]);
        assert_eq!(p.apply_transition(&t).as_array(), &array![[0.8, 0.1], [0.2, 0.9]]);
    }

    proptest! {
        #[test]
        fn hungarian_matches_enumeration(k in 1usize..6, vals in proptest::collection::vec(0.0f64..1.0, 36)) {
            let w = Array2::from_shape_fn((k, k), |(i, j)| vals[i * 6 + j]);
            let a = max_weight_assignment(&w);
            let best = permutations(k).iter().map(|p| score(&w, p)).fold(f64::MIN, f64::max);
            prop_assert!((score(&w, &a) - best).abs() < 1e-12);
            let mut sorted = a.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
        }

        #[test]
        fn resolution_permutes_columns_and_never_lowers_trace(
            vals in proptest::collection::vec(0.01f64..1.0, 3 * 9)
        ) {
            let gs: Vec<ConfusionMatrix> = (0..3)
                .map(|m| {
                    let a = Array2::from_shape_fn((3, 3), |(i, j)| vals[m * 9 + i * 3 + j]);
                    ConfusionMatrix::normalized(a).unwrap()
                })
                .collect();
            let (out, _, perm) = resolve_permutation(&gs, &Prior::uniform(3));
            let trace = |v: &[ConfusionMatrix]| -> f64 {
                v.iter().map(|g| g.as_array().diag().sum()).sum()
            };
            prop_assert!(trace(&out) >= trace(&gs) - 1e-12);
            for (g, h) in gs.iter().zip(&out) {
                for c in 0..3 {
                    prop_assert_eq!(h.column(c), g.column(perm.0[c]));
                }
            }
        }
    }
}
