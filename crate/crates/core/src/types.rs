//! Data model shared by every estimator.
//!
//! Class labels are 1-based at every public boundary (`0` marks a missing
//! response in a [`ResponseMatrix`]). Matrix rows and columns are indexed by
//! 0-based class index, so `labels[n] - 1` addresses the matrices.

use std::fmt;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};

/// Tolerance for column and vector sums of stochastic objects.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// A violated [`ResponseMatrix`] invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    TooFewClasses { k_classes: usize },
    NoLearners,
    NoItems,
    EntryOutOfRange { learner: usize, item: usize, value: u32 },
    ItemWithoutResponses { item: usize },
    LearnerWithoutResponses { learner: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewClasses { k_classes } => {
                write!(f, "need at least 2 classes, got {k_classes}")
            }
            Violation::NoLearners => write!(f, "no learners"),
            Violation::NoItems => write!(f, "no items"),
            Violation::EntryOutOfRange { learner, item, value } => write!(
                f,
                "entry out of range: learner {} item {} has value {value}",
                learner + 1,
                item + 1
            ),
            Violation::ItemWithoutResponses { item } => {
                write!(f, "item with no responses: item {}", item + 1)
            }
            Violation::LearnerWithoutResponses { learner } => {
                write!(f, "learner with no responses: learner {}", learner + 1)
            }
        }
    }
}

/// Reports every violated invariant of an M×N response grid (learners in
/// rows). An empty report means the grid is a valid [`ResponseMatrix`].
pub fn validate(entries: &Array2<u32>, k_classes: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let (m, n) = entries.dim();
    if k_classes < 2 {
        out.push(Violation::TooFewClasses { k_classes });
    }
    if m == 0 {
        out.push(Violation::NoLearners);
    }
    if n == 0 {
        out.push(Violation::NoItems);
    }
    for ((learner, item), &value) in entries.indexed_iter() {
        if value as usize > k_classes {
            out.push(Violation::EntryOutOfRange { learner, item, value });
        }
    }
    for item in 0..n {
        if entries.column(item).iter().all(|&v| v == 0) {
            out.push(Violation::ItemWithoutResponses { item });
        }
    }
    for learner in 0..m {
        if entries.row(learner).iter().all(|&v| v == 0) {
            out.push(Violation::LearnerWithoutResponses { learner });
        }
    }
    out
}

/// Learner answers: an M×N grid with entries in `0..=K`, `0` meaning the
/// learner did not respond to that item.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    k_classes: usize,
    entries: Array2<u32>,
}

impl ResponseMatrix {
    pub fn new(entries: Array2<u32>, k_classes: usize) -> Result<Self> {
        let report = validate(&entries, k_classes);
        if !report.is_empty() {
            return Err(FusionError::InvalidResponses(report));
        }
        Ok(Self { k_classes, entries })
    }

    /// Builds from per-item rows (one row per item, one column per learner),
    /// the layout of the CSV response file.
    pub fn from_item_rows(rows: &[Vec<u32>], k_classes: usize) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(FusionError::Dimension(format!(
                "item {} has {} responses, expected {m}",
                i + 1,
                r.len()
            )));
        }
        let entries = Array2::from_shape_fn((m, n), |(l, i)| rows[i][l]);
        Self::new(entries, k_classes)
    }

    pub fn n_learners(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.entries.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.k_classes
    }

    pub fn entries(&self) -> &Array2<u32> {
        &self.entries
    }

    /// 0-based class answered by `learner` on `item`, if any.
    #[inline]
    pub fn response(&self, learner: usize, item: usize) -> Option<usize> {
        match self.entries[[learner, item]] {
            0 => None,
            v => Some(v as usize - 1),
        }
    }

    /// `(learner, 0-based class)` for every learner that answered `item`.
    pub fn item_responses(&self, item: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries
            .column(item)
            .into_iter()
            .enumerate()
            .filter_map(|(m, &v)| (v != 0).then_some((m, v as usize - 1)))
    }

    /// Number of learners that answered `item` (M_n).
    pub fn responders(&self, item: usize) -> usize {
        self.entries.column(item).iter().filter(|&&v| v != 0).count()
    }
}

fn check_column_stochastic(what: &'static str, a: &Array2<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(FusionError::Dimension(format!(
            "{what} must be square, got {:?}",
            a.dim()
        )));
    }
    if let Some(v) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(FusionError::NotStochastic {
            what,
            detail: format!("entry {v}"),
        });
    }
    for (k, col) in a.columns().into_iter().enumerate() {
        let s = col.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(FusionError::NotStochastic {
                what,
                detail: format!("column {} sums to {s}", k + 1),
            });
        }
    }
    Ok(())
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(FusionError::Dimension("matrix rows must have length K".into()));
    }
    Ok(Array2::from_shape_fn((k, k), |(i, j)| rows[i][j]))
}

macro_rules! stochastic_matrix {
    ($name:ident, $what:literal) => {
        impl $name {
            /// Validates column-stochasticity within [`STOCHASTIC_TOL`].
            pub fn new(entries: Array2<f64>) -> Result<Self> {
                check_column_stochastic($what, &entries)?;
                Ok(Self(entries))
            }

            /// Rescales each column to sum to one before validating, absorbing
            /// rounding drift from iterative updates.
            pub fn normalized(mut entries: Array2<f64>) -> Result<Self> {
                for mut col in entries.columns_mut() {
                    let s = col.sum();
                    if s > 0.0 {
                        col /= s;
                    }
                }
                Self::new(entries)
            }

            pub fn identity(k: usize) -> Self {
                Self(Array2::eye(k))
            }

            pub fn uniform(k: usize) -> Self {
                Self(Array2::from_elem((k, k), 1.0 / k as f64))
            }

            pub fn n_classes(&self) -> usize {
                self.0.nrows()
            }

            pub fn as_array(&self) -> &Array2<f64> {
                &self.0
            }

            pub fn into_array(self) -> Array2<f64> {
                self.0
            }

            pub fn column(&self, k: usize) -> ArrayView1<'_, f64> {
                self.0.column(k)
            }
        }

        impl TryFrom<Vec<Vec<f64>>> for $name {
            type Error = FusionError;
            fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
                Self::new(from_rows(&rows)?)
            }
        }

        impl From<$name> for Vec<Vec<f64>> {
            fn from(m: $name) -> Self {
                rows_of(&m.0)
            }
        }
    };
}

/// Learner confusion matrix: entry `(answer, truth)` is
/// `P(learner answers answer | true class is truth)`; columns sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConfusionMatrix(Array2<f64>);

stochastic_matrix!(ConfusionMatrix, "confusion matrix");

impl ConfusionMatrix {
    #[inline]
    pub fn get(&self, answer: usize, truth: usize) -> f64 {
        self.0[[answer, truth]]
    }
}

/// Label transition matrix: entry `(next, prev)` is
/// `P(y_n = next | y_{n-1} = prev)`; columns sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix(Array2<f64>);

stochastic_matrix!(TransitionMatrix, "transition matrix");

impl TransitionMatrix {
    #[inline]
    pub fn get(&self, next: usize, prev: usize) -> f64 {
        self.0[[next, prev]]
    }

    /// True when every state reaches every other, i.e. `(I + T)^K > 0`.
    pub fn is_irreducible(&self) -> bool {
        let k = self.n_classes();
        let step = Array2::<f64>::eye(k) + &self.0;
        let mut reach = Array2::<f64>::eye(k);
        for _ in 0..k {
            reach = reach.dot(&step);
            // keep magnitudes bounded; only the sign pattern matters
            let max = reach.iter().copied().fold(0.0, f64::max);
            reach /= max;
        }
        reach.iter().all(|&v| v > 0.0)
    }
}

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prior(Array1<f64>);

impl Prior {
    pub fn new(probs: Array1<f64>) -> Result<Self> {
        if probs.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FusionError::NotStochastic {
                what: "prior",
                detail: "negative or non-finite entry".into(),
            });
        }
        let s = probs.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(FusionError::NotStochastic {
                what: "prior",
                detail: format!("sums to {s}"),
            });
        }
        Ok(Self(probs))
    }

    pub fn normalized(mut probs: Array1<f64>) -> Result<Self> {
        let s = probs.sum();
        if s > 0.0 {
            probs /= s;
        }
        Self::new(probs)
    }

    pub fn uniform(k: usize) -> Self {
        Self(Array1::from_elem(k, 1.0 / k as f64))
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

impl TryFrom<Vec<f64>> for Prior {
    type Error = FusionError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(v))
    }
}

impl From<Prior> for Vec<f64> {
    fn from(p: Prior) -> Self {
        p.0.to_vec()
    }
}

/// Split of the N items into contiguous, temporally ordered segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequencePartition {
    lengths: Vec<usize>,
}

impl SequencePartition {
    pub fn new(lengths: Vec<usize>, n_items: usize) -> Result<Self> {
        if lengths.is_empty() {
            return Err(FusionError::InvalidParameter("partition has no segments".into()));
        }
        if let Some(i) = lengths.iter().position(|&l| l == 0) {
            return Err(FusionError::InvalidParameter(format!(
                "segment {} has length 0",
                i + 1
            )));
        }
        let total: usize = lengths.iter().sum();
        if total != n_items {
            return Err(FusionError::Dimension(format!(
                "segment lengths sum to {total}, expected {n_items} items"
            )));
        }
        Ok(Self { lengths })
    }

    pub fn single(n_items: usize) -> Result<Self> {
        Self::new(vec![n_items], n_items)
    }

    /// `n_segments` equal segments of `len` items each.
    pub fn uniform(n_segments: usize, len: usize) -> Result<Self> {
        Self::new(vec![len; n_segments], n_segments * len)
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn n_items(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Item index ranges of each segment, in order.
    pub fn segments(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.lengths.iter().scan(0usize, |start, &len| {
            let r = *start..*start + len;
            *start += len;
            Some(r)
        })
    }
}

/// Undirected graph over items; nodes are 0-based item indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DataGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize, Option<f64>)>,
    neighbors: Vec<Vec<(usize, Option<f64>)>>,
}

impl DataGraph {
    /// Edges are unordered pairs with an optional per-edge trust weight.
    /// Self-loops, duplicates and non-positive weights are rejected.
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize, Option<f64>)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n_nodes];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b, w) in &edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(FusionError::InvalidParameter(format!(
                    "edge ({}, {}) references a node outside 1..={n_nodes}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(FusionError::InvalidParameter(format!(
                    "self-loop at node {}",
                    a + 1
                )));
            }
            if let Some(d) = w {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(FusionError::InvalidParameter(format!(
                        "edge ({}, {}) has non-positive weight {d}",
                        a + 1,
                        b + 1
                    )));
                }
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(FusionError::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
            neighbors[a].push((b, w));
            neighbors[b].push((a, w));
            normalized.push((key.0, key.1, w));
        }
        Ok(Self {
            n_nodes,
            edges: normalized,
            neighbors,
        })
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
            neighbors: vec![Vec::new(); n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, Option<f64>)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, Option<f64>)] {
        &self.neighbors[node]
    }

    pub fn has_edge_weights(&self) -> bool {
        !self.edges.is_empty() && self.edges.iter().all(|e| e.2.is_some())
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n_nodes == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.n_nodes as f64
        }
    }
}

/// Output of every fusion pipeline.
#[derive(Debug, Clone)]
pub struct FusionResult {
    /// Estimated 1-based labels.
    pub labels: Vec<usize>,
    /// N×K row-stochastic label posteriors.
    pub posteriors: Array2<f64>,
    pub confusions: Vec<ConfusionMatrix>,
    pub prior: Prior,
    pub transition: Option<TransitionMatrix>,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FusionResult {
    /// Fills `labels` from row argmaxes of `posteriors` (ties to the lowest
    /// class).
    pub(crate) fn labels_from_posteriors(posteriors: &Array2<f64>) -> Vec<usize> {
        posteriors
            .rows()
            .into_iter()
            .map(|r| crate::numeric::argmax(r.as_slice().expect("standard layout")) + 1)
            .collect()
    }
}
