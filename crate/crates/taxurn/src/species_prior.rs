//! Pitman-Yor urn probabilities, partition likelihoods, per-level parameter
//! fitting, and the prior over candidate leaves.
//!
//! Each rank of the tree carries its own urn parameters `(alpha, sigma)`:
//! given a parent with children of sizes `n_1..n_k` (total `n`), the next
//! sequence joins child `j` with probability `(n_j - sigma) / (alpha + n)`
//! and starts a new child with probability `(alpha + sigma k) / (alpha + n)`.
//! Parameters are fitted per level by maximizing the product, over all
//! parents at the level above, of exchangeable partition probability
//! functions (EPPF) of the observed children partitions.
//!
//! The prior probability of a candidate leaf is the product of these urn
//! terms along its branch; a novel candidate takes the "new" term at the
//! level where it splits off and probability 1 below (a new node forces new
//! nodes at every deeper level). Summed over all candidates, the prior is
//! exactly 1.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::optim::nelder_mead_2d;
use crate::taxonomy::{CandidateLeaf, NodeId, TaxonomicTree};
use crate::{Error, Result};

/// Per-rank urn parameters.
///
/// Valid range: `sigma` in `[0, 1)` and `alpha >= -sigma`. The boundary
/// `alpha = -sigma` (notably `alpha = sigma = 0`, the "never novel"
/// proportions baseline) is admitted; it assigns probability zero to new
/// taxa from a single block onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub alpha: f64,
    pub sigma: f64,
}

impl LevelParams {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma) || !sigma.is_finite() {
            return Err(Error::Numeric(format!(
                "sigma must lie in [0, 1), got {sigma}"
            )));
        }
        if !alpha.is_finite() || alpha < -sigma {
            return Err(Error::Numeric(format!(
                "alpha must satisfy alpha >= -sigma, got alpha = {alpha}, sigma = {sigma}"
            )));
        }
        Ok(Self { alpha, sigma })
    }
}

/// Sizes of the blocks of a partition: children counts under one parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCounts {
    frequencies: Vec<u64>,
}

impl PartitionCounts {
    pub fn new(frequencies: Vec<u64>) -> Result<Self> {
        if frequencies.is_empty() || frequencies.iter().any(|&f| f == 0) {
            return Err(Error::Numeric(
                "partition needs at least one block, all blocks positive".into(),
            ));
        }
        Ok(Self { frequencies })
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// Total number of items `n`.
    pub fn total(&self) -> u64 {
        self.frequencies.iter().sum()
    }

    /// Number of blocks `k`.
    pub fn blocks(&self) -> usize {
        self.frequencies.len()
    }
}

/// Probability that the next item joins each existing block (entries
/// `0..k`) or a new one (entry `k`): `(n_j - sigma)/(alpha + n)` and
/// `(alpha + sigma k)/(alpha + n)`. Entries are non-negative and sum to 1.
pub fn urn_probabilities(counts: &PartitionCounts, params: LevelParams) -> Vec<f64> {
    let n = counts.total() as f64;
    let k = counts.blocks() as f64;
    let denom = params.alpha + n;
    let mut out: Vec<f64> = counts
        .frequencies
        .iter()
        .map(|&nj| (nj as f64 - params.sigma) / denom)
        .collect();
    out.push((params.alpha + params.sigma * k) / denom);
    out
}

/// Rising factorial in log space: `ln (x)_a = ln Gamma(x + a) - ln Gamma(x)`.
fn ln_pochhammer(x: f64, a: u64) -> f64 {
    if a == 0 {
        0.0
    } else {
        ln_gamma(x + a as f64) - ln_gamma(x)
    }
}

/// Log of the exchangeable partition probability function:
///
/// ```text
/// [ prod_{i=1}^{k-1} (alpha + i sigma) ] / (alpha + 1)_{n-1}
///   * prod_j (1 - sigma)_{n_j - 1}
/// ```
///
/// For `k = 1` the leading product is empty. All factors are computed in
/// log space so partitions with tens of thousands of items stay finite.
/// On the boundary `alpha = -sigma` a multi-block partition has probability
/// zero and the result is `-inf`.
pub fn log_eppf(counts: &PartitionCounts, params: LevelParams) -> f64 {
    let n = counts.total();
    let k = counts.blocks() as u64;
    let mut sum = 0.0;
    for i in 1..k {
        sum += (params.alpha + i as f64 * params.sigma).ln();
    }
    sum -= ln_pochhammer(params.alpha + 1.0, n - 1);
    for &nj in &counts.frequencies {
        sum += ln_pochhammer(1.0 - params.sigma, nj - 1);
    }
    sum
}

/// Sum of [`log_eppf`] over a set of partitions, in slice order.
pub fn partitions_log_likelihood(partitions: &[PartitionCounts], params: LevelParams) -> f64 {
    partitions.iter().map(|p| log_eppf(p, params)).sum()
}

/// Children-count partitions of every parent one level above `level`.
pub fn level_partitions(tree: &TaxonomicTree, level: usize) -> Vec<PartitionCounts> {
    assert!(
        (1..=tree.num_levels()).contains(&level),
        "level must lie in 1..=L"
    );
    tree.internal_nodes()
        .iter()
        .filter(|&&v| tree.node(v).level == level - 1)
        .map(|&v| {
            let freqs = tree.node(v)
                .children
                .iter()
                .map(|&c| tree.node(c).seq_count)
                .collect();
            PartitionCounts::new(freqs).expect("tree children have positive counts")
        })
        .collect()
}

/// Result of a per-level maximum-likelihood fit.
#[derive(Debug, Clone, Copy)]
pub struct LevelFit {
    pub params: LevelParams,
    /// Achieved log-likelihood (sum of per-parent log EPPFs).
    pub log_objective: f64,
    /// True when the level was uninformative (every parent a single
    /// singleton child) and the boundary default was returned.
    pub degenerate: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Transforms an unconstrained point into valid urn parameters:
/// `sigma = logistic(x)`, `alpha = exp(y) - sigma + 1e-8`.
fn constrain(x: [f64; 2]) -> LevelParams {
    let sigma = logistic(x[0]);
    let alpha = x[1].exp() - sigma + 1e-8;
    LevelParams { alpha, sigma }
}

/// Maximum-likelihood fit of `(alpha, sigma)` shared by a set of partitions.
///
/// The search runs an unconstrained simplex from the start grid
/// `x in {-2, 0, 2} x y in {-1, 1}` and keeps the best optimum. A level
/// where every partition is the single block `{1}` has a flat likelihood;
/// it returns `alpha = 1e-2, sigma = 0` flagged as degenerate (a small
/// alpha keeps novelty probability positive but tiny).
pub fn fit_partitions(partitions: &[PartitionCounts]) -> LevelFit {
    let degenerate = partitions.iter().all(|p| p.total() == 1);
    if degenerate || partitions.is_empty() {
        let params = LevelParams {
            alpha: 1e-2,
            sigma: 0.0,
        };
        return LevelFit {
            params,
            log_objective: partitions_log_likelihood(partitions, params),
            degenerate: true,
        };
    }

    let objective = |x: [f64; 2]| -partitions_log_likelihood(partitions, constrain(x));
    let mut best: Option<([f64; 2], f64)> = None;
    for x0 in [-2.0, 0.0, 2.0] {
        for y0 in [-1.0, 1.0] {
            let (x, v) = nelder_mead_2d(objective, [x0, y0], 0.5, 400);
            if best.map_or(true, |(_, bv)| v < bv) {
                best = Some((x, v));
            }
        }
    }
    let (x, v) = best.expect("at least one start");
    LevelFit {
        params: constrain(x),
        log_objective: -v,
        degenerate: false,
    }
}

/// Fits the urn parameters of one level from the children partitions of all
/// parents at the level above.
pub fn fit_level_params(tree: &TaxonomicTree, level: usize) -> LevelFit {
    fit_partitions(&level_partitions(tree, level))
}

/// Log prior probability of one candidate leaf: the product along its branch
/// of urn terms for observed nodes, the "new" term at the novelty level if
/// the candidate is novel, and factors of 1 below it. `params[l - 1]` holds
/// the level-`l` parameters.
pub fn leaf_log_prior(
    tree: &TaxonomicTree,
    params: &[LevelParams],
    candidate: &CandidateLeaf,
) -> f64 {
    debug_assert_eq!(params.len(), tree.num_levels());
    let mut path: Vec<NodeId> = Vec::new();
    let mut v = candidate.node();
    loop {
        path.push(v);
        match tree.node(v).parent {
            Some(p) => v = p,
            None => break,
        }
    }
    path.reverse();

    let mut log_prob = 0.0;
    for pair in path.windows(2) {
        let (parent, child) = (pair[0], pair[1]);
        let level = tree.node(child).level;
        let p = params[level - 1];
        log_prob += (tree.node(child).seq_count as f64 - p.sigma).ln()
            - (p.alpha + tree.node(parent).seq_count as f64).ln();
    }
    if let CandidateLeaf::Novel(anchor) = *candidate {
        let level = tree.node(anchor).level + 1;
        let p = params[level - 1];
        let k = tree.node(anchor).child_count() as f64;
        log_prob += (p.alpha + p.sigma * k).ln()
            - (p.alpha + tree.node(anchor).seq_count as f64).ln();
    }
    log_prob
}

/// Log priors of every candidate in canonical enumeration order (the order
/// of [`TaxonomicTree::enumerate_candidates`]), computed in one traversal.
pub fn leaf_log_priors(tree: &TaxonomicTree, params: &[LevelParams]) -> Vec<f64> {
    assert_eq!(params.len(), tree.num_levels());
    let mut out = Vec::with_capacity(tree.leaves().len() + tree.internal_nodes().len());
    walk_priors(tree, params, tree.root(), 0.0, &mut out);
    out
}

fn walk_priors(
    tree: &TaxonomicTree,
    params: &[LevelParams],
    v: NodeId,
    acc: f64,
    out: &mut Vec<f64>,
) {
    let node = tree.node(v);
    if node.level == tree.num_levels() {
        out.push(acc);
        return;
    }
    let p = params[node.level];
    let n_parent = node.seq_count as f64;
    for &c in &node.children {
        let child_acc =
            acc + (tree.node(c).seq_count as f64 - p.sigma).ln() - (p.alpha + n_parent).ln();
        walk_priors(tree, params, c, child_acc, out);
    }
    let novel =
        acc + (p.alpha + p.sigma * node.child_count() as f64).ln() - (p.alpha + n_parent).ln();
    out.push(novel);
}
