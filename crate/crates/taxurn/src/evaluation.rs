//! Scoring predictions against ground truth, with novelty-aware
//! correctness, per-rank accuracy tables, and novelty-detection summaries.
//!
//! A truth is novel at rank `l` when its label path leaves the training
//! taxonomy above that rank; novelty then propagates to every deeper rank.
//! At observed ranks a prediction is correct when it names the truth's
//! taxon on the same branch. At novel ranks it is correct only when it
//! declares novelty anchored at the truth's deepest observed ancestor, in
//! which case the forced chain below the anchor is correct all the way
//! down. Three outcomes classify predictions for novel truths: fully
//! correct (right anchor), novel on a wrong branch (novelty recognized,
//! wrong parent), or predicted observed (novelty missed).

use crate::classifier::Annotation;
use crate::taxonomy::TaxonomicTree;
use crate::{Error, Result};

/// How a prediction handled a truly-novel query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoveltyOutcome {
    /// Novel declared at the right rank under the right parent.
    FullyCorrectNovel,
    /// Novel declared at the truth's first novel rank, wrong branch or
    /// wrong novelty rank.
    NovelWrongBranch,
    /// An observed taxon was predicted where the truth is novel.
    PredictedObserved,
}

/// One query scored against its true label path.
#[derive(Debug, Clone)]
pub struct ScoredPrediction {
    pub id: String,
    /// Per-rank correctness.
    pub rank_correct: Vec<bool>,
    /// Per-rank truth novelty (monotone down ranks).
    pub truth_novel: Vec<bool>,
    /// Per-rank predicted novelty.
    pub pred_novel: Vec<bool>,
    /// Probability of the predicted taxon at each rank.
    pub rank_probability: Vec<f64>,
    /// Probability at the lowest rank (the reported leaf confidence).
    pub max_probability: f64,
    /// Set only when the truth is novel at some rank.
    pub novelty: Option<NoveltyOutcome>,
}

impl ScoredPrediction {
    /// True when any rank of the truth is novel.
    pub fn truth_is_novel(&self) -> bool {
        *self.truth_novel.last().unwrap_or(&false)
    }

    /// 0-based index of the truth's first novel rank, if any.
    pub fn first_novel_rank(&self) -> Option<usize> {
        self.truth_novel.iter().position(|&b| b)
    }

    /// True when the prediction declares novelty at the truth's first
    /// novel rank, regardless of branch.
    pub fn recognized_novel(&self) -> bool {
        self.first_novel_rank()
            .map(|r| self.pred_novel[r])
            .unwrap_or(false)
    }
}

/// Scores one annotation against the truth's label path. `tree` is the
/// training taxonomy that defines which taxa are observed.
pub fn score_prediction(
    predicted: &Annotation,
    truth: &[String],
    tree: &TaxonomicTree,
) -> Result<ScoredPrediction> {
    let num_levels = tree.num_levels();
    if truth.len() != num_levels {
        return Err(Error::Data(format!(
            "query '{}' has {} truth labels for {} ranks",
            predicted.id,
            truth.len(),
            num_levels
        )));
    }
    if predicted.ranks.len() != num_levels {
        return Err(Error::Data(format!(
            "prediction '{}' has {} ranks, expected {}",
            predicted.id,
            predicted.ranks.len(),
            num_levels
        )));
    }
    if truth.iter().any(|l| l.trim().is_empty()) {
        return Err(Error::Data(format!(
            "query '{}' has an empty truth label",
            predicted.id
        )));
    }

    let (_, observed_depth) = tree.deepest_observed(truth);
    let truth_novel: Vec<bool> = (1..=num_levels).map(|l| l > observed_depth).collect();
    let pred_novel: Vec<bool> = predicted.ranks.iter().map(|r| r.novel).collect();
    let rank_probability: Vec<f64> = predicted.ranks.iter().map(|r| r.probability).collect();

    // Cumulative observed-branch match between prediction and truth.
    let mut prefix_ok = vec![false; num_levels];
    let mut ok = true;
    for (r, rank) in predicted.ranks.iter().enumerate() {
        ok = ok && !rank.novel && rank.label == truth[r];
        prefix_ok[r] = ok;
    }

    // A novel truth is predicted correctly when novelty starts exactly at
    // the first novel rank and the observed prefix above it matches.
    let pred_first_novel = pred_novel.iter().position(|&b| b);
    let anchored_correct = pred_first_novel == Some(observed_depth)
        && (observed_depth == 0 || prefix_ok[observed_depth - 1]);

    let rank_correct: Vec<bool> = (0..num_levels)
        .map(|r| {
            if truth_novel[r] {
                anchored_correct
            } else {
                prefix_ok[r]
            }
        })
        .collect();

    let novelty = if observed_depth == num_levels {
        None
    } else if !pred_novel[observed_depth] {
        Some(NoveltyOutcome::PredictedObserved)
    } else if anchored_correct {
        Some(NoveltyOutcome::FullyCorrectNovel)
    } else {
        Some(NoveltyOutcome::NovelWrongBranch)
    };

    let max_probability = *rank_probability.last().expect("at least one rank");
    Ok(ScoredPrediction {
        id: predicted.id.clone(),
        rank_correct,
        truth_novel,
        pred_novel,
        rank_probability,
        max_probability,
        novelty,
    })
}

/// Query subgroups reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    All,
    New,
    Observed,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::All => "all",
            Group::New => "new",
            Group::Observed => "observed",
        }
    }

    fn includes(&self, scored: &ScoredPrediction) -> bool {
        match self {
            Group::All => true,
            Group::New => scored.truth_is_novel(),
            Group::Observed => !scored.truth_is_novel(),
        }
    }
}

/// One row of the per-rank accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub rank: String,
    pub group: Group,
    pub n: usize,
    pub accuracy_pct: f64,
    pub mean_probability: f64,
}

/// Per-rank accuracy (%) and mean predicted probability, for the whole set
/// and split by whether the truth was novel anywhere. Empty groups report
/// zeros with `n = 0`.
pub fn accuracy_table(
    scored: &[ScoredPrediction],
    rank_names: &[String],
) -> Result<Vec<AccuracyRow>> {
    if scored.is_empty() {
        return Err(Error::Data("no scored predictions to tabulate".into()));
    }
    let mut rows = Vec::with_capacity(rank_names.len() * 3);
    for (r, rank) in rank_names.iter().enumerate() {
        for group in [Group::All, Group::New, Group::Observed] {
            let mut n = 0usize;
            let mut correct = 0usize;
            let mut prob_sum = 0.0;
            for s in scored.iter().filter(|s| group.includes(s)) {
                n += 1;
                correct += s.rank_correct[r] as usize;
                prob_sum += s.rank_probability[r];
            }
            let (accuracy_pct, mean_probability) = if n == 0 {
                (0.0, 0.0)
            } else {
                (100.0 * correct as f64 / n as f64, prob_sum / n as f64)
            };
            rows.push(AccuracyRow {
                rank: rank.clone(),
                group,
                n,
                accuracy_pct,
                mean_probability,
            });
        }
    }
    Ok(rows)
}

/// Novelty-detection counts over a scored set.
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltySummary {
    /// Queries predicted novel at the lowest rank.
    pub predicted_novel_leaves: usize,
    /// Queries whose truth is novel at some rank.
    pub truly_novel: usize,
    /// Truly-novel queries predicted novel at their first novel rank.
    pub recognized_novel: usize,
    /// Truly-novel queries with the right anchor.
    pub fully_correct_novel: usize,
    pub recognized_pct: f64,
    pub fully_correct_pct: f64,
}

/// Counts novelty outcomes; percentages are relative to the truly-novel
/// count (zero when nothing is novel).
pub fn novelty_summary(scored: &[ScoredPrediction]) -> NoveltySummary {
    let predicted_novel_leaves = scored
        .iter()
        .filter(|s| *s.pred_novel.last().unwrap_or(&false))
        .count();
    let truly_novel = scored.iter().filter(|s| s.truth_is_novel()).count();
    let recognized_novel = scored.iter().filter(|s| s.recognized_novel()).count();
    let fully_correct_novel = scored
        .iter()
        .filter(|s| s.novelty == Some(NoveltyOutcome::FullyCorrectNovel))
        .count();
    let pct = |k: usize| {
        if truly_novel == 0 {
            0.0
        } else {
            100.0 * k as f64 / truly_novel as f64
        }
    };
    NoveltySummary {
        predicted_novel_leaves,
        truly_novel,
        recognized_novel,
        fully_correct_novel,
        recognized_pct: pct(recognized_novel),
        fully_correct_pct: pct(fully_correct_novel),
    }
}
