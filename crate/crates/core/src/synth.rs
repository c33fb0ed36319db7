//! Seeded generators for synthetic sequential and networked worlds.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{FusionError, Result};
use crate::types::{ConfusionMatrix, DataGraph, Prior, ResponseMatrix, SequencePartition, TransitionMatrix};

/// Mixing weight moved onto the diagonal per remix step.
const REMIX_STEP: f64 = 0.2;
/// Ratio `p_in / p_out` used when converting a mean degree.
pub const SBM_RATIO: f64 = 9.0;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent seed for sub-stream `stream` of a run seeded with `seed`
/// (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn dirichlet_ones<R: Rng>(rng: &mut R, k: usize) -> Array1<f64> {
    let mut v = Array1::from_shape_fn(k, |_| loop {
        let x: f64 = Exp1.sample(rng);
        if x > 0.0 {
            break x;
        }
    });
    let s = v.sum();
    v /= s;
    v
}

fn random_stochastic<R: Rng>(rng: &mut R, k: usize) -> Array2<f64> {
    let mut a = Array2::zeros((k, k));
    for mut col in a.columns_mut() {
        col.assign(&dirichlet_ones(rng, k));
    }
    a
}

/// Every column's diagonal entry is strictly its largest.
pub fn is_better_than_random(g: &ConfusionMatrix) -> bool {
    let a = g.as_array();
    (0..a.ncols()).all(|c| (0..a.nrows()).all(|r| r == c || a[[c, c]] > a[[r, c]]))
}

/// `M` random confusion matrices with Dirichlet(1) columns. Exactly
/// `better_count` learners (default `⌊M/2⌋ + 1`) pass
/// [`is_better_than_random`]: their columns are mixed toward the identity
/// until the diagonal dominates, the others are redrawn if they pass by
/// chance.
pub fn gen_confusions(m: usize, k: usize, seed: u64, better_count: Option<usize>) -> Result<Vec<ConfusionMatrix>> {
    let better = better_count.unwrap_or(m / 2 + 1);
    if m == 0 || better == 0 || better > m {
        return Err(FusionError::InvalidParameter(format!("better_count {better} outside 1..={m}")));
    }
    if k < 2 {
        return Err(FusionError::InvalidParameter("K must be at least 2".into()));
    }
    let mut rng = rng(seed);
    let mut designated = vec![false; m];
    for i in sample(&mut rng, m, better) {
        designated[i] = true;
    }
    let mut out = Vec::with_capacity(m);
    for &good in &designated {
        let g = if good {
            let mut a = random_stochastic(&mut rng, k);
            for (c, mut col) in a.columns_mut().into_iter().enumerate() {
                while (0..k).any(|r| r != c && col[r] >= col[c]) {
                    col *= 1.0 - REMIX_STEP;
                    col[c] += REMIX_STEP;
                }
            }
            ConfusionMatrix::normalized(a)?
        } else {
            loop {
                let g = ConfusionMatrix::normalized(random_stochastic(&mut rng, k))?;
                if !is_better_than_random(&g) {
                    break g;
                }
            }
        };
        out.push(g);
    }
    Ok(out)
}

/// Random irreducible transition matrix with Dirichlet(1) columns.
pub fn gen_transition(k: usize, seed: u64) -> Result<TransitionMatrix> {
    if k < 2 {
        return Err(FusionError::InvalidParameter("K must be at least 2".into()));
    }
    let mut rng = rng(seed);
    loop {
        let t = TransitionMatrix::normalized(random_stochastic(&mut rng, k))?;
        if t.is_irreducible() {
            return Ok(t);
        }
    }
}

/// Fixed point `Tπ = π` by power iteration on the lazy chain `(I + T)/2`,
/// to an ℓ₁ change of 1e-12.
pub fn stationary_distribution(t: &TransitionMatrix) -> Result<Prior> {
    if !t.is_irreducible() {
        return Err(FusionError::InvalidParameter("transition matrix is reducible".into()));
    }
    let k = t.n_classes();
    let lazy = (t.as_array() + &Array2::<f64>::eye(k)) * 0.5;
    let mut p = Array1::from_elem(k, 1.0 / k as f64);
    for _ in 0..1_000_000 {
        let mut next = lazy.dot(&p);
        let s = next.sum();
        next /= s;
        let change: f64 = (&next - &p).mapv(f64::abs).sum();
        p = next;
        if change < 1e-12 {
            return Prior::normalized(p);
        }
    }
    Err(FusionError::Numeric("stationary distribution did not converge".into()))
}

fn column_samplers(a: &Array2<f64>) -> Result<Vec<WeightedIndex<f64>>> {
    a.columns()
        .into_iter()
        .map(|c| WeightedIndex::new(c.iter().copied()).map_err(|e| FusionError::Numeric(e.to_string())))
        .collect()
}

/// Markov-chain labels (1-based) for segments of the given lengths; each
/// segment starts from the stationary distribution.
pub fn gen_markov_labels(
    t: &TransitionMatrix,
    lengths: &[usize],
    seed: u64,
) -> Result<(Vec<usize>, SequencePartition)> {
    let pi = stationary_distribution(t)?;
    let start = WeightedIndex::new(pi.as_array().iter().copied()).map_err(|e| FusionError::Numeric(e.to_string()))?;
    let steps = column_samplers(t.as_array())?;
    let n: usize = lengths.iter().sum();
    let partition = SequencePartition::new(lengths.to_vec(), n)?;
    let mut rng = rng(seed);
    let mut labels = Vec::with_capacity(n);
    for &len in lengths {
        let mut y = start.sample(&mut rng);
        labels.push(y + 1);
        for _ in 1..len {
            y = steps[y].sample(&mut rng);
            labels.push(y + 1);
        }
    }
    Ok((labels, partition))
}

/// Community sizes `⌊N/K⌋`, the first `N mod K` communities one larger.
fn community_labels(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).flat_map(|c| std::iter::repeat_n(c + 1, base + usize::from(c < extra))).collect()
}

/// Stochastic block model with contiguous communities. Returns the graph
/// and the 1-based community of each node.
pub fn gen_sbm_graph(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(DataGraph, Vec<usize>)> {
    if k == 0 || !(0.0..=1.0).contains(&p_in) || !(0.0..=p_in).contains(&p_out) {
        return Err(FusionError::InvalidParameter(format!(
            "need 0 ≤ p_out ≤ p_in ≤ 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let communities = community_labels(n, k);
    let mut edges = Vec::new();
    if p_in > 0.0 && n > 1 {
        let mut rng = rng(seed);
        let ln_q = (1.0 - p_in).ln();
        // candidate pairs at rate p_in by geometric skipping; inter-community
        // candidates are thinned to p_out
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            if p_in < 1.0 {
                let u: f64 = 1.0 - rng.random::<f64>();
                j += (u.ln() / ln_q).floor() as usize;
            }
            while i + 1 < n && j >= n - i - 1 {
                j -= n - i - 1;
                i += 1;
            }
            if i + 1 >= n {
                break;
            }
            let other = i + 1 + j;
            if communities[i] == communities[other] || rng.random::<f64>() * p_in < p_out {
                edges.push((i, other, None));
            }
            j += 1;
        }
    }
    Ok((DataGraph::new(n, edges)?, communities))
}

/// `(p_in, p_out)` with `p_in = 9·p_out` whose expected mean degree is
/// `mean_degree` for the community sizes used by [`gen_sbm_graph`].
pub fn sbm_probabilities(n: usize, k: usize, mean_degree: f64) -> Result<(f64, f64)> {
    if n < 2 || k == 0 || mean_degree < 0.0 {
        return Err(FusionError::InvalidParameter("need N ≥ 2, K ≥ 1 and a non-negative degree".into()));
    }
    let pairs = |s: usize| (s * s.saturating_sub(1) / 2) as f64;
    let sizes = (0..k).map(|c| n / k + usize::from(c < n % k));
    let within: f64 = sizes.map(pairs).sum();
    let between = pairs(n) - within;
    let p_out = mean_degree * n as f64 / 2.0 / (SBM_RATIO * within + between);
    let p_in = SBM_RATIO * p_out;
    if p_in > 1.0 {
        return Err(FusionError::InvalidParameter(format!("mean degree {mean_degree} is unreachable")));
    }
    Ok((p_in, p_out))
}

/// Responses drawn from column `y_n` of each learner's confusion matrix,
/// blanked with probability `missing_rate`; an item that would lose every
/// response has its blanking redrawn.
pub fn gen_responses(
    labels: &[usize],
    confusions: &[ConfusionMatrix],
    missing_rate: f64,
    seed: u64,
) -> Result<ResponseMatrix> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(FusionError::InvalidParameter(format!("missing rate {missing_rate} outside [0, 1)")));
    }
    let k = confusions
        .first()
        .ok_or_else(|| FusionError::InvalidParameter("no learners".into()))?
        .n_classes();
    let samplers = confusions
        .iter()
        .map(|g| column_samplers(g.as_array()))
        .collect::<Result<Vec<_>>>()?;
    let m = confusions.len();
    let mut rng = rng(seed);
    let mut entries = Array2::<u32>::zeros((m, labels.len()));
    for (n, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(FusionError::InvalidParameter(format!("label {y} outside 1..={k}")));
        }
        let answers: Vec<u32> = samplers.iter().map(|s| s[y - 1].sample(&mut rng) as u32 + 1).collect();
        let keep = loop {
            let keep: Vec<bool> = (0..m).map(|_| rng.random::<f64>() >= missing_rate).collect();
            if keep.iter().any(|&b| b) {
                break keep;
            }
        };
        for learner in 0..m {
            if keep[learner] {
                entries[[learner, n]] = answers[learner];
            }
        }
    }
    ResponseMatrix::new(entries, k)
}

/// Shape of a synthetic sequential world.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqWorldConfig {
    pub k: usize,
    pub m: usize,
    pub segment_len: usize,
    pub n_segments: usize,
    pub missing_rate: f64,
    pub better_count: Option<usize>,
}

impl SeqWorldConfig {
    /// `K = 4`, `M = 10`, segments of 40 items, enough of them for about
    /// `n_items` items.
    pub fn standard(n_items: usize) -> Self {
        Self {
            k: 4,
            m: 10,
            segment_len: 40,
            n_segments: n_items.div_ceil(40).max(1),
            missing_rate: 0.0,
            better_count: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeqWorld {
    pub truth: Vec<usize>,
    pub partition: SequencePartition,
    pub confusions: Vec<ConfusionMatrix>,
    pub transition: TransitionMatrix,
    pub responses: ResponseMatrix,
}

pub fn simulate_sequential(config: &SeqWorldConfig, seed: u64) -> Result<SeqWorld> {
    let confusions = gen_confusions(config.m, config.k, derive_seed(seed, 1), config.better_count)?;
    let transition = gen_transition(config.k, derive_seed(seed, 2))?;
    let lengths = vec![config.segment_len; config.n_segments];
    let (truth, partition) = gen_markov_labels(&transition, &lengths, derive_seed(seed, 3))?;
    let responses = gen_responses(&truth, &confusions, config.missing_rate, derive_seed(seed, 4))?;
    Ok(SeqWorld {
        truth,
        partition,
        confusions,
        transition,
        responses,
    })
}

/// Shape of a synthetic networked world; truth labels are SBM communities.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWorldConfig {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub mean_degree: f64,
    pub missing_rate: f64,
    pub better_count: Option<usize>,
}

impl NetWorldConfig {
    pub fn standard(n: usize, mean_degree: f64) -> Self {
        Self {
            k: 4,
            m: 10,
            n,
            mean_degree,
            missing_rate: 0.0,
            better_count: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetWorld {
    pub truth: Vec<usize>,
    pub graph: DataGraph,
    pub confusions: Vec<ConfusionMatrix>,
    pub responses: ResponseMatrix,
}

pub fn simulate_networked(config: &NetWorldConfig, seed: u64) -> Result<NetWorld> {
    let confusions = gen_confusions(config.m, config.k, derive_seed(seed, 1), config.better_count)?;
    let (p_in, p_out) = sbm_probabilities(config.n, config.k, config.mean_degree)?;
    let (graph, truth) = gen_sbm_graph(config.n, config.k, p_in, p_out, derive_seed(seed, 5))?;
    let responses = gen_responses(&truth, &confusions, config.missing_rate, derive_seed(seed, 4))?;
    Ok(NetWorld {
        truth,
        graph,
        confusions,
        responses,
    })
}
