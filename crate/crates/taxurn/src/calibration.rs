//! Temperature selection on a held-out split and calibration diagnostics.
//!
//! Probabilities are calibrated when the average confidence of the
//! lowest-rank predictions equals their accuracy. The temperature is chosen
//! from a grid by minimizing that gap: the holdout is scored once,
//! untempered, and each grid point only re-tempers the cached posteriors,
//! which is exactly equivalent to reclassifying because tempering is the
//! final step of classification. An expected-calibration-error objective
//! (equal-width confidence bins) is available as an alternative.

use crate::classifier::{temper, Model};
use crate::evaluation::score_prediction;
use crate::{Error, Result};

/// Default temperature grid; brackets heavy flattening and identity.
pub const DEFAULT_RHO_GRID: [f64; 10] =
    [0.02, 0.05, 0.08, 0.1, 0.15, 0.2, 0.3, 0.5, 0.7, 1.0];

/// Default number of calibration-curve points.
pub const DEFAULT_CURVE_BINS: usize = 20;

/// What select_rho minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// |accuracy - mean confidence| at the lowest rank.
    Gap,
    /// Expected calibration error over equal-width confidence bins.
    Ece,
}

/// One labeled holdout query.
#[derive(Debug, Clone, Copy)]
pub struct LabeledQuery<'a> {
    pub id: &'a str,
    pub sequence: &'a str,
    pub truth: &'a [String],
}

/// Measurements at one grid temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoPoint {
    pub rho: f64,
    /// Lowest-rank accuracy, percent.
    pub accuracy_pct: f64,
    /// Mean lowest-rank predicted probability, 0..1.
    pub mean_probability: f64,
    /// |accuracy - mean probability| as a fraction.
    pub gap: f64,
    /// Expected calibration error as a fraction.
    pub ece: f64,
}

/// One point of the cumulative calibration curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub cumulative_probability_pct: f64,
    pub cumulative_accuracy_pct: f64,
}

/// Grid search result plus the curve at the chosen temperature.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub grid: Vec<RhoPoint>,
    pub chosen_rho: f64,
    pub objective: Objective,
    pub curve: Vec<CurvePoint>,
}

/// Scores the holdout once untempered, then measures every grid
/// temperature by re-tempering the cached posteriors. Ties on the
/// objective go to the larger rho (less distortion).
pub fn select_rho(
    model: &Model,
    holdout: &[LabeledQuery<'_>],
    grid: &[f64],
    objective: Objective,
    curve_bins: usize,
) -> Result<CalibrationReport> {
    if holdout.is_empty() {
        return Err(Error::Data("calibration holdout is empty".into()));
    }
    if grid.is_empty() {
        return Err(Error::Usage("temperature grid is empty".into()));
    }

    let cached: Vec<Vec<f64>> = holdout
        .iter()
        .map(|q| {
            let plan = model.plan(q.id, q.sequence)?;
            model.untempered_posterior(&plan)
        })
        .collect::<Result<_>>()?;

    let lowest = model.tree.num_levels() - 1;
    let measure = |rho: f64| -> Result<(RhoPoint, Vec<(f64, bool)>)> {
        let mut outcomes = Vec::with_capacity(holdout.len());
        for (q, untempered) in holdout.iter().zip(&cached) {
            let probs = temper(untempered, rho)?;
            let annotation = model.annotate(q.id, &probs, 1);
            let scored = score_prediction(&annotation, q.truth, &model.tree)?;
            outcomes.push((scored.rank_probability[lowest], scored.rank_correct[lowest]));
        }
        let n = outcomes.len() as f64;
        let mean_probability = outcomes.iter().map(|(p, _)| p).sum::<f64>() / n;
        let accuracy = outcomes.iter().filter(|(_, c)| *c).count() as f64 / n;
        let point = RhoPoint {
            rho,
            accuracy_pct: 100.0 * accuracy,
            mean_probability,
            gap: (accuracy - mean_probability).abs(),
            ece: expected_calibration_error(&outcomes, 10),
        };
        Ok((point, outcomes))
    };

    let mut points = Vec::with_capacity(grid.len());
    let mut chosen: Option<(f64, f64)> = None;
    for &rho in grid {
        let (point, _) = measure(rho)?;
        let score = match objective {
            Objective::Gap => point.gap,
            Objective::Ece => point.ece,
        };
        let better = match chosen {
            None => true,
            Some((best, best_rho)) => score < best || (score == best && rho > best_rho),
        };
        if better {
            chosen = Some((score, rho));
        }
        points.push(point);
    }
    let chosen_rho = chosen.expect("non-empty grid").1;

    let (_, outcomes) = measure(chosen_rho)?;
    let curve = calibration_curve(&outcomes, curve_bins);

    Ok(CalibrationReport {
        grid: points,
        chosen_rho,
        objective,
        curve,
    })
}

/// Cumulative calibration curve: predictions sorted by confidence
/// descending, (mean confidence %, accuracy %) over the top-k prefix,
/// sampled at `n_bins` quantile cutoffs. Identical consecutive points
/// collapse, so a constant prediction set yields a single point. A
/// perfectly calibrated set tracks the diagonal.
pub fn calibration_curve(outcomes: &[(f64, bool)], n_bins: usize) -> Vec<CurvePoint> {
    if outcomes.is_empty() || n_bins == 0 {
        return Vec::new();
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let n = sorted.len();
    let mut cutoffs: Vec<usize> = (1..=n_bins)
        .map(|j| (n * j).div_ceil(n_bins).max(1))
        .collect();
    cutoffs.dedup();

    let mut curve = Vec::with_capacity(cutoffs.len());
    let mut prob_sum = 0.0;
    let mut correct = 0usize;
    let mut taken = 0usize;
    let mut next = cutoffs.iter().peekable();
    for (i, (p, c)) in sorted.iter().enumerate() {
        prob_sum += p;
        correct += *c as usize;
        taken = i + 1;
        if next.peek() == Some(&&taken) {
            next.next();
            curve.push(CurvePoint {
                cumulative_probability_pct: 100.0 * prob_sum / taken as f64,
                cumulative_accuracy_pct: 100.0 * correct as f64 / taken as f64,
            });
        }
    }
    debug_assert_eq!(taken, n);
    curve.dedup_by(|a, b| {
        (a.cumulative_probability_pct - b.cumulative_probability_pct).abs() < 1e-12
            && (a.cumulative_accuracy_pct - b.cumulative_accuracy_pct).abs() < 1e-12
    });
    curve
}

/// Expected calibration error: equal-width confidence bins over [0, 1],
/// weighted by bin occupancy.
pub fn expected_calibration_error(outcomes: &[(f64, bool)], n_bins: usize) -> f64 {
    if outcomes.is_empty() || n_bins == 0 {
        return 0.0;
    }
    let mut conf = vec![0.0; n_bins];
    let mut acc = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for &(p, c) in outcomes {
        let bin = ((p * n_bins as f64) as usize).min(n_bins - 1);
        conf[bin] += p;
        acc[bin] += c as usize;
        count[bin] += 1;
    }
    let n = outcomes.len() as f64;
    (0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            (k / n) * ((acc[b] as f64 / k) - (conf[b] / k)).abs()
        })
        .sum()
}
