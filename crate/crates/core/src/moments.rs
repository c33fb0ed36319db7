//! Empirical statistics of one-hot learner responses.
//!
//! Every statistic is averaged over the items where all learners involved
//! responded, so missing responses are handled by pairwise (and triple-wise)
//! deletion.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3};

use crate::error::{FusionError, Result};
use crate::types::{ResponseMatrix, SequencePartition};

/// First-, second- and third-order response moments.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub k_classes: usize,
    /// Per-learner mean one-hot response.
    pub means: Vec<Array1<f64>>,
    /// `S[(m, m')]` for `m < m'`, row index = learner m's answer.
    pub pair_corrs: BTreeMap<(usize, usize), Array2<f64>>,
    /// Third-order tensors for `m < m' < m''`, axes in learner order.
    pub triple_corrs: BTreeMap<(usize, usize, usize), Array3<f64>>,
    pub pair_counts: BTreeMap<(usize, usize), usize>,
    pub triple_counts: BTreeMap<(usize, usize, usize), usize>,
    /// Pairs and triples omitted for lack of co-responses.
    pub missing_pairs: Vec<(usize, usize)>,
    pub missing_triples: Vec<(usize, usize, usize)>,
}

impl MomentSet {
    pub fn n_learners(&self) -> usize {
        self.means.len()
    }

    /// Cross-correlation of any two distinct learners; `(m', m)` is served as
    /// the transpose of the stored `(m, m')`.
    pub fn pair(&self, m: usize, m2: usize) -> Option<Array2<f64>> {
        if m < m2 {
            self.pair_corrs.get(&(m, m2)).cloned()
        } else {
            self.pair_corrs.get(&(m2, m)).map(|s| s.t().to_owned())
        }
    }
}

/// Cross-correlations of consecutive responses within segments.
#[derive(Debug, Clone)]
pub struct LaggedMomentSet {
    pub k_classes: usize,
    /// `S~[(m, m')]` averages `e_{f_m(x_n)} e_{f_m'(x_{n-1})}^T`; all ordered
    /// pairs, including `m == m'`, that have co-observed consecutive items.
    pub lag_corrs: BTreeMap<(usize, usize), Array2<f64>>,
    pub lag_counts: BTreeMap<(usize, usize), usize>,
}

pub fn estimate_moments(responses: &ResponseMatrix) -> MomentSet {
    let m = responses.n_learners();
    let k = responses.n_classes();
    let n = responses.n_items();

    let mut means = vec![Array1::<f64>::zeros(k); m];
    let mut mean_counts = vec![0usize; m];
    let mut pairs: BTreeMap<(usize, usize), (Array2<f64>, usize)> = BTreeMap::new();
    let mut triples: BTreeMap<(usize, usize, usize), (Array3<f64>, usize)> = BTreeMap::new();

    let mut answered: Vec<(usize, usize)> = Vec::with_capacity(m);
    for item in 0..n {
        answered.clear();
        answered.extend(responses.item_responses(item));
        for (i, &(a, ka)) in answered.iter().enumerate() {
            means[a][ka] += 1.0;
            mean_counts[a] += 1;
            for (j, &(b, kb)) in answered.iter().enumerate().skip(i + 1) {
                let e = pairs
                    .entry((a, b))
                    .or_insert_with(|| (Array2::zeros((k, k)), 0));
                e.0[[ka, kb]] += 1.0;
                e.1 += 1;
                for &(c, kc) in &answered[j + 1..] {
                    let t = triples
                        .entry((a, b, c))
                        .or_insert_with(|| (Array3::zeros((k, k, k)), 0));
                    t.0[[ka, kb, kc]] += 1.0;
                    t.1 += 1;
                }
            }
        }
    }

    for (mu, &c) in means.iter_mut().zip(&mean_counts) {
        if c > 0 {
            *mu /= c as f64;
        }
    }

    let mut pair_corrs = BTreeMap::new();
    let mut pair_counts = BTreeMap::new();
    for (key, (mut s, c)) in pairs {
        s /= c as f64;
        pair_corrs.insert(key, s);
        pair_counts.insert(key, c);
    }
    let mut triple_corrs = BTreeMap::new();
    let mut triple_counts = BTreeMap::new();
    for (key, (mut t, c)) in triples {
        t /= c as f64;
        triple_corrs.insert(key, t);
        triple_counts.insert(key, c);
    }

    let mut missing_pairs = Vec::new();
    let mut missing_triples = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            if !pair_corrs.contains_key(&(a, b)) {
                missing_pairs.push((a, b));
            }
            for c in b + 1..m {
                if !triple_corrs.contains_key(&(a, b, c)) {
                    missing_triples.push((a, b, c));
                }
            }
        }
    }

    MomentSet {
        k_classes: k,
        means,
        pair_corrs,
        triple_corrs,
        pair_counts,
        triple_counts,
        missing_pairs,
        missing_triples,
    }
}

pub fn estimate_lagged_moments(
    responses: &ResponseMatrix,
    partition: &SequencePartition,
) -> Result<LaggedMomentSet> {
    if partition.n_items() != responses.n_items() {
        return Err(FusionError::Dimension(format!(
            "partition covers {} items, responses have {}",
            partition.n_items(),
            responses.n_items()
        )));
    }
    let k = responses.n_classes();
    let mut acc: BTreeMap<(usize, usize), (Array2<f64>, usize)> = BTreeMap::new();
    let mut prev: Vec<(usize, usize)> = Vec::new();
    let mut cur: Vec<(usize, usize)> = Vec::new();
    for seg in partition.segments() {
        for item in seg.clone().skip(1) {
            prev.clear();
            prev.extend(responses.item_responses(item - 1));
            cur.clear();
            cur.extend(responses.item_responses(item));
            for &(a, ka) in &cur {
                for &(b, kb) in &prev {
                    let e = acc.entry((a, b)).or_insert_with(|| (Array2::zeros((k, k)), 0));
                    e.0[[ka, kb]] += 1.0;
                    e.1 += 1;
                }
            }
        }
    }
    if acc.is_empty() {
        return Err(FusionError::Degenerate(
            "no consecutive co-observed items within any segment".into(),
        ));
    }
    let mut lag_corrs = BTreeMap::new();
    let mut lag_counts = BTreeMap::new();
    for (key, (mut s, c)) in acc {
        s /= c as f64;
        lag_corrs.insert(key, s);
        lag_counts.insert(key, c);
    }
    Ok(LaggedMomentSet {
        k_classes: k,
        lag_corrs,
        lag_counts,
    })
}
