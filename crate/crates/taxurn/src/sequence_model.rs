//! Sequence encodings, multinomial kernels, conjugate sufficient statistics,
//! and method-of-moments hyperparameters.
//!
//! Three kernels map a library onto dense per-leaf count tables indexed by
//! (locus, symbol):
//!
//! - `Product1`: aligned sequences, one locus per position, 4 nucleotide
//!   symbols; gap positions are excluded from counts and scoring.
//! - `Product2`: aligned sequences, one locus per overlapping adjacent pair
//!   (positions `s, s+1` for `s = 1..p-1`), 16 dinucleotide symbols; pairs
//!   touching a gap are excluded.
//! - `Kmer`: unaligned sequences, a single global locus whose symbols are
//!   the `4^kappa` k-mers; windows containing a non-ACGT character are
//!   skipped.
//!
//! Under a per-locus Dirichlet prior with hyperparameters `xi`, the
//! predictive probability of symbol `g` at locus `s` of a leaf with counts
//! `n` is `(xi_g + n_g) / M_s` with `M_s = sum_g (xi_g + n_g)`; a novel leaf
//! has zero counts and reduces to `xi_g / xi_0`. Scoring sums these logs
//! over query loci; query gaps contribute nothing.
//!
//! Hyperparameters are tuned by matching the first two moments of the
//! per-leaf symbol proportions beneath a node to Dirichlet moments. Every
//! observed leaf takes the fit at its parent; every novel candidate takes
//! the fit at its anchor, so all siblings share one prior.

use serde::{Deserialize, Serialize};

use crate::taxonomy::{CandidateLeaf, NodeId, TaxonomicTree};
use crate::{Error, Result};

/// Number of nucleotide symbols (A, C, G, T).
pub const NUM_NUC: usize = 4;
/// Code for an alignment gap or unrecognized character.
pub const GAP_CODE: u8 = 4;
/// Positional-query marker for "no observation at this locus".
pub const MISSING: u16 = u16::MAX;

/// Which multinomial kernel a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Product1,
    Product2,
    Kmer,
}

/// Kernel geometry: how sequences map onto (locus, symbol) tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Aligned sequence length; 0 for the k-mer kernel.
    pub p: usize,
    /// k-mer width; 0 for aligned kernels.
    pub kappa: usize,
}

impl KernelSpec {
    pub fn product1(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Data("aligned length p must be positive".into()));
        }
        Ok(Self {
            kind: KernelKind::Product1,
            p,
            kappa: 0,
        })
    }

    pub fn product2(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::Data(
                "dinucleotide kernel needs aligned length p >= 2".into(),
            ));
        }
        Ok(Self {
            kind: KernelKind::Product2,
            p,
            kappa: 0,
        })
    }

    pub fn kmer(kappa: usize) -> Result<Self> {
        if !(1..=8).contains(&kappa) {
            return Err(Error::Usage(format!(
                "kappa must lie in 1..=8, got {kappa}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Kmer,
            p: 0,
            kappa,
        })
    }

    pub fn num_loci(&self) -> usize {
        match self.kind {
            KernelKind::Product1 => self.p,
            KernelKind::Product2 => self.p - 1,
            KernelKind::Kmer => 1,
        }
    }

    pub fn num_symbols(&self) -> usize {
        match self.kind {
            KernelKind::Product1 => NUM_NUC,
            KernelKind::Product2 => NUM_NUC * NUM_NUC,
            KernelKind::Kmer => NUM_NUC.pow(self.kappa as u32),
        }
    }

    /// Length of one dense (locus x symbol) table.
    pub fn table_len(&self) -> usize {
        self.num_loci() * self.num_symbols()
    }

    pub fn requires_alignment(&self) -> bool {
        !matches!(self.kind, KernelKind::Kmer)
    }
}

/// Nucleotide code of one byte: A/C/G/T (case-folded) map to 0..=3,
/// everything else (gaps, N, IUPAC ambiguity codes) to [`GAP_CODE`].
#[inline]
pub fn nuc_code(byte: u8) -> u8 {
    match byte {
        b'A' | b'a' => 0,
        b'C' | b'c' => 1,
        b'G' | b'g' => 2,
        b'T' | b't' => 3,
        _ => GAP_CODE,
    }
}

/// An aligned sequence as per-locus codes (0..=3 nucleotides, 4 gap).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSeq {
    pub id: String,
    pub codes: Vec<u8>,
}

/// Encodes an aligned sequence, requiring exactly `p` positions.
pub fn encode_aligned(id: &str, raw: &str, p: usize) -> Result<AlignedSeq> {
    if raw.len() != p {
        return Err(Error::Data(format!(
            "sequence '{id}' has length {} but the model is aligned at p = {p}",
            raw.len()
        )));
    }
    Ok(AlignedSeq {
        id: id.to_string(),
        codes: raw.bytes().map(nuc_code).collect(),
    })
}

/// Global k-mer counts of one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerVector {
    pub kappa: usize,
    /// Length `4^kappa`.
    pub counts: Vec<u32>,
    /// Number of counted windows (windows with non-ACGT characters are
    /// skipped, so this can be less than `len - kappa + 1`).
    pub total: u64,
}

/// Counts every width-`kappa` window of `raw` (stride 1), skipping windows
/// that contain a non-ACGT character.
pub fn kmer_counts(raw: &str, kappa: usize) -> Result<KmerVector> {
    if !(1..=8).contains(&kappa) {
        return Err(Error::Usage(format!("kappa must lie in 1..=8, got {kappa}")));
    }
    let mut counts = vec![0u32; NUM_NUC.pow(kappa as u32)];
    let mut total = 0u64;
    let mask = (1usize << (2 * kappa)) - 1;
    let mut code = 0usize;
    let mut valid = 0usize;
    for byte in raw.bytes() {
        let c = nuc_code(byte);
        if c == GAP_CODE {
            valid = 0;
            code = 0;
            continue;
        }
        code = ((code << 2) | c as usize) & mask;
        valid += 1;
        if valid >= kappa {
            counts[code] += 1;
            total += 1;
        }
    }
    Ok(KmerVector {
        kappa,
        counts,
        total,
    })
}

/// A query mapped into a kernel's (locus, symbol) geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodedQuery {
    /// One symbol per locus; [`MISSING`] marks loci without an observation.
    Positional(Vec<u16>),
    /// Global symbol counts (k-mer kernel).
    Counts { counts: Vec<u32>, total: u64 },
}

/// Encodes a raw query string for the given kernel.
pub fn encode_query(spec: &KernelSpec, id: &str, raw: &str) -> Result<EncodedQuery> {
    match spec.kind {
        KernelKind::Product1 => {
            let seq = encode_aligned(id, raw, spec.p)?;
            Ok(EncodedQuery::Positional(
                seq.codes
                    .iter()
                    .map(|&c| if c == GAP_CODE { MISSING } else { c as u16 })
                    .collect(),
            ))
        }
        KernelKind::Product2 => {
            let seq = encode_aligned(id, raw, spec.p)?;
            let symbols = seq
                .codes
                .windows(2)
                .map(|w| {
                    if w[0] == GAP_CODE || w[1] == GAP_CODE {
                        MISSING
                    } else {
                        (w[0] as u16) * NUM_NUC as u16 + w[1] as u16
                    }
                })
                .collect();
            Ok(EncodedQuery::Positional(symbols))
        }
        KernelKind::Kmer => {
            let v = kmer_counts(raw, spec.kappa)?;
            Ok(EncodedQuery::Counts {
                counts: v.counts,
                total: v.total,
            })
        }
    }
}

/// Per-leaf sufficient statistics for one kernel.
///
/// Counts are stored as `f64`: real libraries only ever add integers, but
/// the moments machinery is defined on proportions and keeping the table in
/// floating point lets fractional statistics flow through unchanged.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub spec: KernelSpec,
    /// Dense (locus x symbol) counts per leaf, in canonical leaf order.
    pub leaf_counts: Vec<Vec<f64>>,
    /// Per-leaf proportion denominator: the leaf's sequence count for
    /// aligned kernels, its total k-mer window count for the k-mer kernel.
    pub leaf_norm: Vec<f64>,
}

/// Accumulates per-leaf counts over `(leaf, raw sequence)` pairs.
pub fn accumulate_stats<'a, I>(
    tree: &TaxonomicTree,
    spec: KernelSpec,
    sequences: I,
) -> Result<SuffStats>
where
    I: IntoIterator<Item = (NodeId, &'a str)>,
{
    let num_leaves = tree.leaves().len();
    let mut leaf_counts = vec![vec![0.0; spec.table_len()]; num_leaves];
    let mut leaf_norm = vec![0.0; num_leaves];
    let num_symbols = spec.num_symbols();

    for (leaf, raw) in sequences {
        let idx = tree
            .leaf_index(leaf)
            .ok_or_else(|| Error::Data("sequence assigned to a non-leaf node".into()))?;
        match spec.kind {
            KernelKind::Product1 => {
                let seq = encode_aligned("<library>", raw, spec.p)?;
                for (s, &c) in seq.codes.iter().enumerate() {
                    if c != GAP_CODE {
                        leaf_counts[idx][s * num_symbols + c as usize] += 1.0;
                    }
                }
                leaf_norm[idx] += 1.0;
            }
            KernelKind::Product2 => {
                let seq = encode_aligned("<library>", raw, spec.p)?;
                for (s, w) in seq.codes.windows(2).enumerate() {
                    if w[0] != GAP_CODE && w[1] != GAP_CODE {
                        let g = w[0] as usize * NUM_NUC + w[1] as usize;
                        leaf_counts[idx][s * num_symbols + g] += 1.0;
                    }
                }
                leaf_norm[idx] += 1.0;
            }
            KernelKind::Kmer => {
                let v = kmer_counts(raw, spec.kappa)?;
                for (g, &c) in v.counts.iter().enumerate() {
                    if c > 0 {
                        leaf_counts[idx][g] += c as f64;
                    }
                }
                leaf_norm[idx] += v.total as f64;
            }
        }
    }

    Ok(SuffStats {
        spec,
        leaf_counts,
        leaf_norm,
    })
}

/// Method-of-moments Dirichlet fit at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentsFit {
    /// Dense (locus x symbol) hyperparameters.
    pub xi: Vec<f64>,
    /// Per-locus concentration estimate. `sum_g xi_g = xi_0 * sum_g theta_g`,
    /// which is below `xi_0` when leaves hold several sequences or gaps
    /// deplete a locus; predictive tables always normalize by `sum_g xi_g`.
    pub xi0: Vec<f64>,
    /// Number of loci where the degenerate clamp fired.
    pub clamped_loci: usize,
}

/// Fits per-locus Dirichlet hyperparameters at `node` from the symbol
/// proportions of its descendant leaves.
///
/// Per locus `s`: with `q_{v,g} = n_{v,s,g} / d_v` the leaf proportions
/// (denominator as in [`SuffStats::leaf_norm`]),
///
/// ```text
/// theta_g = ( sum_v q_{v,g} ) / N(node)
/// S       = ( sum_v sum_g q_{v,g}^2 ) / N(node)
/// m       = sum_g theta_g^2
/// xi_0    = (1 - S) / (S - m),   xi_g = xi_0 * theta_g
/// ```
///
/// The divisor of the outer averages is the node's sequence count `N(node)`
/// exactly as the estimator is defined, so it is a plain average over
/// leaves only when every leaf holds a single sequence. When `S - m <=
/// 1e-9` or `xi_0` falls outside `[1e-2, 1e4]`, the locus is clamped to
/// `xi_0 = 4` around `theta` floored at `1e-3` per symbol and renormalized
/// (about one pseudo-observation per nucleotide: informative, not
/// dogmatic).
pub fn fit_moments(tree: &TaxonomicTree, stats: &SuffStats, node: NodeId) -> MomentsFit {
    let num_symbols = stats.spec.num_symbols();
    let num_loci = stats.spec.num_loci();
    let mut prop_sum = vec![0.0; stats.spec.table_len()];
    let mut sq_sum = vec![0.0; num_loci];

    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        let n = tree.node(v);
        if n.level == tree.num_levels() {
            let idx = tree.leaf_index(v).expect("level-L node is a leaf");
            let d = stats.leaf_norm[idx];
            if d > 0.0 {
                let counts = &stats.leaf_counts[idx];
                for s in 0..num_loci {
                    let mut sq = 0.0;
                    for g in 0..num_symbols {
                        let q = counts[s * num_symbols + g] / d;
                        prop_sum[s * num_symbols + g] += q;
                        sq += q * q;
                    }
                    sq_sum[s] += sq;
                }
            }
        } else {
            stack.extend(n.children.iter().copied());
        }
    }

    finish_moments(&prop_sum, &sq_sum, tree.node(node).seq_count as f64, stats.spec)
}

fn finish_moments(prop_sum: &[f64], sq_sum: &[f64], n_node: f64, spec: KernelSpec) -> MomentsFit {
    let num_symbols = spec.num_symbols();
    let num_loci = spec.num_loci();
    let mut xi = vec![0.0; spec.table_len()];
    let mut xi0 = vec![0.0; num_loci];
    let mut clamped_loci = 0;

    let mut theta = vec![0.0; num_symbols];
    for s in 0..num_loci {
        let row = &prop_sum[s * num_symbols..(s + 1) * num_symbols];
        let mut m = 0.0;
        for g in 0..num_symbols {
            theta[g] = row[g] / n_node;
            m += theta[g] * theta[g];
        }
        let s_hat = sq_sum[s] / n_node;
        let denom = s_hat - m;
        let raw_xi0 = (1.0 - s_hat) / denom;
        if denom <= 1e-9 || !(1e-2..=1e4).contains(&raw_xi0) {
            clamped_loci += 1;
            let mut floor_sum = 0.0;
            for t in theta.iter_mut() {
                *t = t.max(1e-3);
                floor_sum += *t;
            }
            for (g, t) in theta.iter().enumerate() {
                xi[s * num_symbols + g] = 4.0 * t / floor_sum;
            }
            xi0[s] = 4.0;
        } else {
            for g in 0..num_symbols {
                xi[s * num_symbols + g] = raw_xi0 * theta[g];
            }
            xi0[s] = raw_xi0;
        }
    }

    MomentsFit {
        xi,
        xi0,
        clamped_loci,
    }
}

/// The node whose moments fit a candidate's prior comes from: an observed
/// leaf borrows from its parent; a novel candidate borrows from its anchor,
/// the lowest known taxon on its branch.
pub fn source_node(tree: &TaxonomicTree, candidate: &CandidateLeaf) -> NodeId {
    match *candidate {
        CandidateLeaf::Observed(leaf) => tree.node(leaf).parent.expect("leaves have parents"),
        CandidateLeaf::Novel(anchor) => anchor,
    }
}

/// Moments fits for every internal node; candidates reference them through
/// [`source_node`] and [`TaxonomicTree::internal_index`].
#[derive(Debug, Clone)]
pub struct HyperAssignment {
    pub node_fits: Vec<MomentsFit>,
}

/// Computes the moments fit at every internal node (levels 0..L-1).
pub fn assign_hyperparameters(tree: &TaxonomicTree, stats: &SuffStats) -> HyperAssignment {
    let node_fits = tree
        .internal_nodes()
        .iter()
        .map(|&v| fit_moments(tree, stats, v))
        .collect();
    HyperAssignment { node_fits }
}

impl HyperAssignment {
    /// The fit backing one candidate.
    pub fn for_candidate<'a>(
        &'a self,
        tree: &TaxonomicTree,
        candidate: &CandidateLeaf,
    ) -> &'a MomentsFit {
        let src = source_node(tree, candidate);
        &self.node_fits[tree.internal_index(src).expect("source is internal")]
    }
}

/// Precomputed log predictive tables for every candidate.
///
/// Both kinds normalize by `M_s = sum_g (xi_g + n_g)` per locus:
/// `observed[i][s * G + g] = ln((xi_g + n_g) / M_s)` for leaf `i`, and
/// `novel[j][s * G + g] = ln(xi_g / sum_g xi_g)` for anchor `j` (zero
/// counts). Novel candidates share one table per anchor since they all
/// carry the anchor's prior. Tables are a pure function of statistics plus
/// hyperparameters, so rebuilding after a model round trip reproduces them
/// bit-exactly.
#[derive(Debug, Clone)]
pub struct LogTables {
    pub spec: KernelSpec,
    pub observed: Vec<Vec<f64>>,
    pub novel: Vec<Vec<f64>>,
}

/// Builds all log predictive tables.
pub fn build_log_tables(
    tree: &TaxonomicTree,
    stats: &SuffStats,
    hyper: &HyperAssignment,
) -> LogTables {
    let spec = stats.spec;
    let num_symbols = spec.num_symbols();
    let num_loci = spec.num_loci();

    let observed = tree
        .leaves()
        .iter()
        .enumerate()
        .map(|(idx, &leaf)| {
            let parent = tree.node(leaf).parent.expect("leaves have parents");
            let fit = &hyper.node_fits[tree.internal_index(parent).expect("internal")];
            let counts = &stats.leaf_counts[idx];
            let mut table = vec![0.0; spec.table_len()];
            for s in 0..num_loci {
                let mut m = 0.0;
                for g in 0..num_symbols {
                    m += fit.xi[s * num_symbols + g] + counts[s * num_symbols + g];
                }
                let log_m = m.ln();
                for g in 0..num_symbols {
                    let flat = s * num_symbols + g;
                    table[flat] = (fit.xi[flat] + counts[flat]).ln() - log_m;
                }
            }
            table
        })
        .collect();

    let novel = tree
        .internal_nodes()
        .iter()
        .enumerate()
        .map(|(idx, _)| {
            let fit = &hyper.node_fits[idx];
            let mut table = vec![0.0; spec.table_len()];
            for s in 0..num_loci {
                let mut m = 0.0;
                for g in 0..num_symbols {
                    m += fit.xi[s * num_symbols + g];
                }
                let log_m = m.ln();
                for g in 0..num_symbols {
                    let flat = s * num_symbols + g;
                    table[flat] = fit.xi[flat].ln() - log_m;
                }
            }
            table
        })
        .collect();

    LogTables {
        spec,
        observed,
        novel,
    }
}

impl LogTables {
    /// The log predictive table of one candidate.
    pub fn candidate_table(&self, tree: &TaxonomicTree, candidate: &CandidateLeaf) -> &[f64] {
        match *candidate {
            CandidateLeaf::Observed(leaf) => {
                &self.observed[tree.leaf_index(leaf).expect("leaf")]
            }
            CandidateLeaf::Novel(anchor) => {
                &self.novel[tree.internal_index(anchor).expect("internal")]
            }
        }
    }
}

/// A query pre-resolved for fast repeated scoring against many tables.
#[derive(Debug, Clone)]
pub enum QueryPlan {
    /// Flat table indices of the query's observed loci.
    Indices(Vec<u32>),
    /// Sparse (flat index, count) pairs of the query's nonzero symbols.
    Sparse(Vec<(u32, f64)>),
}

/// Resolves a query into table offsets.
pub fn plan_query(spec: &KernelSpec, query: &EncodedQuery) -> QueryPlan {
    match query {
        EncodedQuery::Positional(symbols) => {
            let num_symbols = spec.num_symbols() as u32;
            QueryPlan::Indices(
                symbols
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g != MISSING)
                    .map(|(s, &g)| s as u32 * num_symbols + g as u32)
                    .collect(),
            )
        }
        EncodedQuery::Counts { counts, .. } => QueryPlan::Sparse(
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(g, &c)| (g as u32, c as f64))
                .collect(),
        ),
    }
}

/// Sum of table entries selected by the plan (the log predictive).
#[inline]
pub fn score_table(table: &[f64], plan: &QueryPlan) -> f64 {
    match plan {
        QueryPlan::Indices(indices) => {
            let mut acc = 0.0;
            for &i in indices {
                acc += table[i as usize];
            }
            acc
        }
        QueryPlan::Sparse(pairs) => {
            let mut acc = 0.0;
            for &(i, c) in pairs {
                acc += c * table[i as usize];
            }
            acc
        }
    }
}

/// Log predictive probability of a query under one candidate table:
/// the sum over observed query loci of `ln((xi + n) / M)` (observed leaf)
/// or `ln(xi / xi_0)` (novel leaf); k-mer queries weight each symbol's log
/// by its count. Query gaps contribute 0.
pub fn log_predictive(spec: &KernelSpec, table: &[f64], query: &EncodedQuery) -> f64 {
    score_table(table, &plan_query(spec, query))
}
