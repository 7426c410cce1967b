//! Synthetic libraries drawn from the model's own generative process, plus
//! train/test splitting.
//!
//! Generation runs the sequential urn scheme the priors assume: each
//! sequence walks the tree from the root, at every level either joining an
//! existing child (probability proportional to its count minus the
//! discount) or opening a new one; a brand-new taxon draws its per-locus
//! nucleotide centers from a Dirichlet around its parent's centers, so
//! related taxa have related compositions and leaf separation is controlled
//! by the per-level base concentration. Sequences are per-locus categorical
//! draws from their leaf's centers.
//!
//! All randomness flows through one seeded ChaCha8 stream (integer-state,
//! portable), so a fixed seed reproduces a library bit-for-bit.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use std::collections::BTreeMap;

use crate::data_io::LibraryRecord;
use crate::species_prior::{urn_probabilities, LevelParams, PartitionCounts};
use crate::{Error, Result};

/// Parameters of one synthetic library.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub rank_names: Vec<String>,
    /// Urn parameters per level.
    pub params: Vec<LevelParams>,
    /// Aligned sequence length.
    pub seq_len: usize,
    /// Per-level Dirichlet base concentration per symbol; new taxa at level
    /// `l` draw centers from Dirichlet(4 * base[l-1] * parent center).
    /// Small values (e.g. 0.5) give well-separated taxa.
    pub base: Vec<f64>,
    pub num_sequences: usize,
    pub seed: u64,
}

/// A generated library with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedLibrary {
    pub records: Vec<LibraryRecord>,
    /// The urn parameters that generated the partition (per level).
    pub params: Vec<LevelParams>,
    /// Per generated leaf: its label path and its per-locus nucleotide
    /// probabilities.
    pub leaf_theta: Vec<(Vec<String>, Vec<[f64; 4]>)>,
}

struct SimNode {
    label: String,
    parent: Option<usize>,
    level: usize,
    children: Vec<usize>,
    count: u64,
    center: Vec<[f64; 4]>,
}

/// Draws a library from nested urns with hierarchical Dirichlet drift.
pub fn simulate_library(config: &SynthConfig) -> Result<SimulatedLibrary> {
    let num_levels = config.rank_names.len();
    if num_levels == 0 {
        return Err(Error::Usage("synthetic config needs at least one rank".into()));
    }
    if config.params.len() != num_levels || config.base.len() != num_levels {
        return Err(Error::Usage(format!(
            "params and base must both have one entry per rank ({num_levels})"
        )));
    }
    if config.base.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Usage("base concentrations must be positive".into()));
    }
    if config.num_sequences == 0 || config.seq_len == 0 {
        return Err(Error::Usage(
            "need at least one sequence and one locus".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nodes = vec![SimNode {
        label: "root".into(),
        parent: None,
        level: 0,
        children: Vec::new(),
        count: 0,
        center: vec![[0.25; 4]; config.seq_len],
    }];
    let mut label_counters = vec![0u64; num_levels];
    let mut records = Vec::with_capacity(config.num_sequences);

    for i in 0..config.num_sequences {
        let mut v = 0usize;
        let mut labels = Vec::with_capacity(num_levels);
        for level in 1..=num_levels {
            let params = config.params[level - 1];
            let next = if nodes[v].children.is_empty() {
                None
            } else {
                let counts: Vec<u64> = nodes[v].children.iter().map(|&c| nodes[c].count).collect();
                let probs =
                    urn_probabilities(&PartitionCounts::new(counts).expect("positive counts"), params);
                let pick = sample_index(&mut rng, &probs);
                if pick < nodes[v].children.len() {
                    Some(nodes[v].children[pick])
                } else {
                    None
                }
            };
            v = match next {
                Some(child) => child,
                None => {
                    let label = format!(
                        "{}_{:04}",
                        config.rank_names[level - 1],
                        label_counters[level - 1]
                    );
                    label_counters[level - 1] += 1;
                    let concentration = 4.0 * config.base[level - 1];
                    let center = (0..config.seq_len)
                        .map(|s| {
                            let parent_center = nodes[v].center[s];
                            let alpha = [
                                concentration * parent_center[0],
                                concentration * parent_center[1],
                                concentration * parent_center[2],
                                concentration * parent_center[3],
                            ];
                            dirichlet4(&mut rng, alpha)
                        })
                        .collect();
                    nodes.push(SimNode {
                        label,
                        parent: Some(v),
                        level,
                        children: Vec::new(),
                        count: 0,
                        center,
                    });
                    let new_idx = nodes.len() - 1;
                    nodes[v].children.push(new_idx);
                    new_idx
                }
            };
            labels.push(nodes[v].label.clone());
        }

        let sequence: String = (0..config.seq_len)
            .map(|s| {
                let theta = nodes[v].center[s];
                b"ACGT"[sample_index(&mut rng, &theta)] as char
            })
            .collect();
        records.push(LibraryRecord {
            id: format!("seq{i:06}"),
            labels,
            sequence,
        });

        let mut up = Some(v);
        while let Some(node) = up {
            nodes[node].count += 1;
            up = nodes[node].parent;
        }
    }

    let leaf_theta = nodes
        .iter()
        .filter(|n| n.level == num_levels)
        .map(|leaf| {
            let mut path = Vec::with_capacity(num_levels);
            let mut v = Some(leaf);
            while let Some(node) = v {
                if node.level == 0 {
                    break;
                }
                path.push(node.label.clone());
                v = node.parent.map(|p| &nodes[p]);
            }
            path.reverse();
            (path, leaf.center.clone())
        })
        .collect();

    Ok(SimulatedLibrary {
        records,
        params: config.params.clone(),
        leaf_theta,
    })
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn dirichlet4(rng: &mut ChaCha8Rng, alpha: [f64; 4]) -> [f64; 4] {
    let mut draw = [0.0; 4];
    let mut total = 0.0;
    for (g, &a) in alpha.iter().enumerate() {
        let shape = a.max(1e-12);
        let gamma = Gamma::new(shape, 1.0).expect("positive shape");
        draw[g] = gamma.sample(rng);
        total += draw[g];
    }
    if total <= 0.0 {
        // All gamma draws underflowed; fall back to the normalized alpha.
        let alpha_total: f64 = alpha.iter().sum();
        return [
            alpha[0] / alpha_total,
            alpha[1] / alpha_total,
            alpha[2] / alpha_total,
            alpha[3] / alpha_total,
        ];
    }
    for d in draw.iter_mut() {
        *d /= total;
    }
    draw
}

/// How holdout_split picks the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Every record equally likely.
    Random,
    /// Repeatedly pick a rank-`level` taxon uniformly, then one of its
    /// remaining sequences uniformly, without replacement; a taxon stays
    /// eligible only while taking a sequence would leave it at least
    /// `min_keep` training records.
    StratifiedByRank { level: usize, min_keep: usize },
}

/// Splits records into (train, test); both sides preserve the input order.
/// The test quota is `round(n * fraction)`; a stratified split may stop
/// short of it when no taxon remains eligible.
pub fn holdout_split(
    records: &[LibraryRecord],
    mode: SplitMode,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LibraryRecord>, Vec<LibraryRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let quota = (records.len() as f64 * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; records.len()];

    match mode {
        SplitMode::Random => {
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut rng);
            for &i in order.iter().take(quota) {
                in_test[i] = true;
            }
        }
        SplitMode::StratifiedByRank { level, min_keep } => {
            let num_levels = records.first().map(|r| r.labels.len()).unwrap_or(0);
            if records.is_empty() || !(1..=num_levels).contains(&level) {
                return Err(Error::Usage(format!(
                    "stratification level {level} is outside 1..={num_levels}"
                )));
            }
            let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                groups.entry(r.labels[..level].to_vec()).or_default().push(i);
            }
            let mut pools: Vec<Vec<usize>> = groups.into_values().collect();
            let mut taken = 0usize;
            while taken < quota {
                let eligible: Vec<usize> = (0..pools.len())
                    .filter(|&t| pools[t].len() > min_keep)
                    .collect();
                if eligible.is_empty() {
                    break;
                }
                let taxon = eligible[rng.gen_range(0..eligible.len())];
                let member = rng.gen_range(0..pools[taxon].len());
                in_test[pools[taxon].swap_remove(member)] = true;
                taken += 1;
            }
        }
    }

    let mut train = Vec::with_capacity(records.len() - quota.min(records.len()));
    let mut test = Vec::with_capacity(quota);
    for (i, r) in records.iter().enumerate() {
        if in_test[i] {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, test))
}
