//! Leaf posteriors, temperature flattening, upward aggregation, and the
//! top-down argmax annotation.
//!
//! A trained [`Model`] scores a query against every candidate leaf as
//! `log prior + log predictive`, normalizes with a max-shifted
//! log-sum-exp, and tempers the resulting probabilities by `p^rho /
//! sum p^rho`. Tempering happens at the leaf level, so every rank-level
//! probability is a sum of tempered leaf probabilities. Rank probabilities
//! come from aggregating candidates upward: an observed leaf contributes to
//! all its ancestors, a novel candidate to its anchor and the anchor's
//! ancestors. The reported annotation walks the tree from the root, picking
//! at each level the child (novel pseudo-child included) with the largest
//! aggregated probability; below a novel pick the branch is forced, so the
//! label chain continues with the same probability.

use serde::{Deserialize, Serialize};

use crate::sequence_model::{
    self, EncodedQuery, HyperAssignment, KernelSpec, LogTables, QueryPlan, SuffStats,
};
use crate::species_prior::{self, LevelFit, LevelParams};
use crate::taxonomy::{CandidateLeaf, NodeId, TaxonomicTree};
use crate::{Error, Result};

/// Default number of leaf candidates reported per query.
pub const DEFAULT_TOP_K: usize = 5;

/// A trained classification model.
#[derive(Debug, Clone)]
pub struct Model {
    pub tree: TaxonomicTree,
    /// Urn parameters per level, index `l - 1` for level `l`.
    pub params: Vec<LevelParams>,
    /// Levels whose partition likelihood was degenerate at fit time.
    pub degenerate_levels: Vec<bool>,
    pub stats: SuffStats,
    pub hyper: HyperAssignment,
    pub tables: LogTables,
    /// Canonical candidate ordering; posteriors align to it.
    pub candidates: Vec<CandidateLeaf>,
    /// Log prior per candidate, same order.
    pub log_priors: Vec<f64>,
    /// Stored temperature, applied when no override is given.
    pub rho: f64,
    /// Per-candidate (is_novel, table index) resolved once.
    slots: Vec<(bool, u32)>,
    /// Candidate index of the novel pseudo-child per node (internal only).
    novel_candidate: Vec<Option<u32>>,
}

/// Normalized, tempered per-candidate probabilities for one query.
#[derive(Debug, Clone)]
pub struct LeafPosterior {
    pub id: String,
    /// Aligned to [`Model::candidates`]; sums to 1.
    pub probs: Vec<f64>,
}

/// One rank of an annotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankPrediction {
    /// 1-based level.
    pub level: usize,
    pub rank: String,
    /// Taxon label, or "New <rank> in <parent>" chained below a novelty.
    pub label: String,
    pub probability: f64,
    pub novel: bool,
}

/// The reported classification of one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub ranks: Vec<RankPrediction>,
    /// Highest-probability leaf candidates, (display path, probability),
    /// sorted by probability descending then path ascending.
    pub top_leaves: Vec<(String, f64)>,
}

/// Fits urn parameters, accumulates kernel statistics, and assembles a
/// model with `rho = 1`.
pub fn train<'a, I>(tree: TaxonomicTree, spec: KernelSpec, sequences: I) -> Result<Model>
where
    I: IntoIterator<Item = (NodeId, &'a str)>,
{
    let fits: Vec<LevelFit> = (1..=tree.num_levels())
        .map(|level| species_prior::fit_level_params(&tree, level))
        .collect();
    let params = fits.iter().map(|f| f.params).collect();
    let degenerate = fits.iter().map(|f| f.degenerate).collect();
    let stats = sequence_model::accumulate_stats(&tree, spec, sequences)?;
    let hyper = sequence_model::assign_hyperparameters(&tree, &stats);
    Model::from_parts(tree, params, degenerate, stats, hyper, 1.0)
}

impl Model {
    /// Assembles a model from its persistent parts, rebuilding log tables,
    /// candidate enumeration, and leaf priors (all pure functions of the
    /// parts, so a save/load round trip reproduces them bit-exactly).
    pub fn from_parts(
        tree: TaxonomicTree,
        params: Vec<LevelParams>,
        degenerate_levels: Vec<bool>,
        stats: SuffStats,
        hyper: HyperAssignment,
        rho: f64,
    ) -> Result<Model> {
        if params.len() != tree.num_levels() {
            return Err(Error::Data(format!(
                "model has {} level parameters for {} levels",
                params.len(),
                tree.num_levels()
            )));
        }
        if stats.leaf_counts.len() != tree.leaves().len()
            || hyper.node_fits.len() != tree.internal_nodes().len()
        {
            return Err(Error::Data(
                "statistics do not match the taxonomy's node counts".into(),
            ));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Usage(format!("rho must lie in (0, 1], got {rho}")));
        }

        let tables = sequence_model::build_log_tables(&tree, &stats, &hyper);
        let candidates = tree.enumerate_candidates();
        let log_priors = species_prior::leaf_log_priors(&tree, &params);
        let mut slots = Vec::with_capacity(candidates.len());
        let mut novel_candidate = vec![None; tree.num_nodes()];
        for (i, cand) in candidates.iter().enumerate() {
            match *cand {
                CandidateLeaf::Observed(leaf) => {
                    slots.push((false, tree.leaf_index(leaf).expect("leaf") as u32));
                }
                CandidateLeaf::Novel(anchor) => {
                    slots.push((true, tree.internal_index(anchor).expect("internal") as u32));
                    novel_candidate[anchor] = Some(i as u32);
                }
            }
        }

        Ok(Model {
            tree,
            params,
            degenerate_levels,
            stats,
            hyper,
            tables,
            candidates,
            log_priors,
            rho,
            slots,
            novel_candidate,
        })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.stats.spec
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Encodes and resolves a raw query for scoring.
    pub fn plan(&self, id: &str, raw: &str) -> Result<QueryPlan> {
        let spec = self.kernel();
        let query: EncodedQuery = sequence_model::encode_query(&spec, id, raw)?;
        Ok(sequence_model::plan_query(&spec, &query))
    }

    #[inline]
    fn table(&self, candidate: usize) -> &[f64] {
        let (novel, idx) = self.slots[candidate];
        if novel {
            &self.tables.novel[idx as usize]
        } else {
            &self.tables.observed[idx as usize]
        }
    }

    /// Unnormalized log posterior per candidate.
    pub fn log_scores(&self, plan: &QueryPlan) -> Vec<f64> {
        (0..self.candidates.len())
            .map(|i| self.log_priors[i] + sequence_model::score_table(self.table(i), plan))
            .collect()
    }

    /// Normalized, untempered posterior per candidate.
    pub fn untempered_posterior(&self, plan: &QueryPlan) -> Result<Vec<f64>> {
        normalize_log(self.log_scores(plan))
    }

    /// Classifies with the stored temperature and default top-k.
    pub fn classify(&self, id: &str, raw: &str) -> Result<(LeafPosterior, Annotation)> {
        self.classify_with(id, raw, self.rho, DEFAULT_TOP_K)
    }

    /// Classifies with an explicit temperature and top-k.
    pub fn classify_with(
        &self,
        id: &str,
        raw: &str,
        rho: f64,
        top_k: usize,
    ) -> Result<(LeafPosterior, Annotation)> {
        let plan = self.plan(id, raw)?;
        let untempered = self.untempered_posterior(&plan)?;
        let probs = temper(&untempered, rho)?;
        let annotation = self.annotate(id, &probs, top_k);
        Ok((
            LeafPosterior {
                id: id.to_string(),
                probs,
            },
            annotation,
        ))
    }

    /// Builds the per-rank annotation from a tempered leaf posterior.
    pub fn annotate(&self, id: &str, probs: &[f64], top_k: usize) -> Annotation {
        let tree = &self.tree;
        let node_probs = aggregate(tree, &self.candidates, probs);
        let num_levels = tree.num_levels();
        let mut ranks = Vec::with_capacity(num_levels);

        let mut current = tree.root();
        let mut novel_probability = 0.0;
        let mut previous_label = String::new();
        let mut gone_novel = false;
        for level in 1..=num_levels {
            let rank = tree.rank_names()[level - 1].clone();
            if gone_novel {
                let label = format!("New {rank} in {previous_label}");
                ranks.push(RankPrediction {
                    level,
                    rank,
                    label: label.clone(),
                    probability: novel_probability,
                    novel: true,
                });
                previous_label = label;
                continue;
            }

            let mut best: Option<(NodeId, f64)> = None;
            for &child in &tree.node(current).children {
                let p = node_probs[child];
                if best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((child, p));
                }
            }
            let novel_p = self.novel_candidate[current]
                .map(|i| probs[i as usize])
                .unwrap_or(0.0);
            match best {
                Some((child, bp)) if bp >= novel_p => {
                    let label = tree.node(child).label.clone();
                    ranks.push(RankPrediction {
                        level,
                        rank,
                        label: label.clone(),
                        probability: bp,
                        novel: false,
                    });
                    previous_label = label;
                    current = child;
                }
                _ => {
                    gone_novel = true;
                    novel_probability = novel_p;
                    let parent_label = tree.node(current).label.clone();
                    let label = format!("New {rank} in {parent_label}");
                    ranks.push(RankPrediction {
                        level,
                        rank,
                        label: label.clone(),
                        probability: novel_probability,
                        novel: true,
                    });
                    previous_label = label;
                }
            }
        }

        let mut leaves: Vec<(String, f64)> = self
            .candidates
            .iter()
            .zip(probs)
            .map(|(cand, &p)| {
                let display = match *cand {
                    CandidateLeaf::Observed(leaf) => tree.display_path(leaf),
                    CandidateLeaf::Novel(anchor) => {
                        format!("new under {}", tree.display_path(anchor))
                    }
                };
                (display, p)
            })
            .collect();
        leaves.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        leaves.truncate(top_k);

        Annotation {
            id: id.to_string(),
            ranks,
            top_leaves: leaves,
        }
    }
}

/// Normalizes a log-space vector into probabilities via max-shifted
/// exponentiation.
pub fn normalize_log(mut log_weights: Vec<f64>) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(
            "all candidate scores are zero or non-finite".into(),
        ));
    }
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in log_weights.iter_mut() {
        *w /= total;
    }
    Ok(log_weights)
}

/// Temperature transform `p_i^rho / sum_j p_j^rho` for `rho` in (0, 1].
///
/// `rho = 1` returns the input unchanged; a degenerate input (some `p_i =
/// 1`) is a fixed point for every `rho`. Computed in log space so tiny
/// probabilities survive the exponent.
pub fn temper(probs: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Usage(format!("rho must lie in (0, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Ok(probs.to_vec());
    }
    normalize_log(probs.iter().map(|&p| rho * p.ln()).collect())
}

/// Aggregates a leaf posterior to every tree node: a node's probability is
/// the sum over candidates beneath it, novel candidates contributing to
/// their anchor and its ancestors. Indexed by [`NodeId`]; the root entry is
/// 1 for a normalized input.
pub fn aggregate(tree: &TaxonomicTree, candidates: &[CandidateLeaf], probs: &[f64]) -> Vec<f64> {
    let mut node_probs = vec![0.0; tree.num_nodes()];
    for (cand, &p) in candidates.iter().zip(probs) {
        let mut v = Some(cand.node());
        while let Some(node) = v {
            node_probs[node] += p;
            v = tree.node(node).parent;
        }
    }
    node_probs
}
