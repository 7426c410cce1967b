//! Taxonomic tree construction, count statistics, and candidate enumeration.
//!
//! A reference library of rank-labeled sequences is represented as a rooted
//! tree with a virtual root at level 0 and one level per rank. Taxon identity
//! is the full root-to-node label path, so identical labels under different
//! parents are distinct nodes. The tree records, for every node `v`, the
//! number of training sequences `N(v)` below it and the number of distinct
//! children `K(v)`; these two counts are the only inputs the species prior
//! needs.
//!
//! Classification considers one candidate per observed leaf plus one "novel"
//! pseudo-leaf anchored at every internal node (root included): a new taxon
//! branching off at level `l` forces new nodes at all levels below it, so a
//! single candidate per anchor covers every unobserved branch.

use std::collections::{HashMap, HashSet};

use crate::{Error, Result};

/// Index of a node in the tree arena.
pub type NodeId = usize;

/// One node of the taxonomic tree. The root is a virtual node at level 0.
#[derive(Debug, Clone)]
pub struct TaxonNode {
    /// 0 for the root, 1..=L for ranked taxa.
    pub level: usize,
    /// Taxon name at this rank ("root" for the root node).
    pub label: String,
    /// Parent node; `None` only for the root.
    pub parent: Option<NodeId>,
    /// Children, sorted lexicographically by label.
    pub children: Vec<NodeId>,
    /// Number of training sequences below this node, `N(v)`.
    pub seq_count: u64,
}

impl TaxonNode {
    /// Number of distinct observed children, `K(v)`.
    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

/// One training record for tree construction: a sequence id plus its
/// rank-label tuple (exactly `L` non-empty labels).
#[derive(Debug, Clone)]
pub struct TreeRecord {
    pub id: String,
    pub labels: Vec<String>,
}

/// Plain node tuple used when rebuilding a tree from a persisted model.
#[derive(Debug, Clone)]
pub struct TopoNode {
    pub level: usize,
    pub label: String,
    pub parent: Option<NodeId>,
    pub seq_count: u64,
}

/// An observed leaf or a novel pseudo-leaf anchored at an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateLeaf {
    /// An observed level-L leaf.
    Observed(NodeId),
    /// A new branch splitting off under the given anchor (level 0..L-1).
    Novel(NodeId),
}

impl CandidateLeaf {
    pub fn is_novel(&self) -> bool {
        matches!(self, CandidateLeaf::Novel(_))
    }

    /// The observed leaf (if observed) or the anchor node (if novel).
    pub fn node(&self) -> NodeId {
        match *self {
            CandidateLeaf::Observed(v) | CandidateLeaf::Novel(v) => v,
        }
    }
}

/// Rooted L-level taxonomic tree with per-node sequence counts.
///
/// Immutable after construction; all accessors are read-only and the
/// structure is safe to share across classification workers.
#[derive(Debug, Clone)]
pub struct TaxonomicTree {
    rank_names: Vec<String>,
    nodes: Vec<TaxonNode>,
    /// Level-L nodes in depth-first, label-lexicographic order.
    leaves: Vec<NodeId>,
    /// Level 0..L-1 nodes in depth-first pre-order (root first).
    internal: Vec<NodeId>,
    leaf_pos: Vec<usize>,
    internal_pos: Vec<usize>,
}

const NO_POS: usize = usize::MAX;

impl TaxonomicTree {
    /// Builds the tree from rank-labeled records and returns it together
    /// with the leaf assignment of each record (parallel to the input).
    ///
    /// Records sharing a label at some level but differing anywhere above it
    /// map to distinct nodes. Duplicate sequence ids are rejected.
    pub fn build(rank_names: Vec<String>, records: &[TreeRecord]) -> Result<(Self, Vec<NodeId>)> {
        let num_levels = rank_names.len();
        if num_levels < 2 {
            return Err(Error::Data(format!(
                "taxonomy needs at least 2 ranks, got {num_levels}"
            )));
        }
        let mut nodes = vec![TaxonNode {
            level: 0,
            label: "root".to_string(),
            parent: None,
            children: Vec::new(),
            seq_count: 0,
        }];
        let mut child_of: HashMap<(NodeId, String), NodeId> = HashMap::new();
        let mut seen_ids: HashSet<&str> = HashSet::with_capacity(records.len());
        let mut assignments = Vec::with_capacity(records.len());

        for rec in records {
            if !seen_ids.insert(&rec.id) {
                return Err(Error::Data(format!("duplicate sequence id '{}'", rec.id)));
            }
            if rec.labels.len() != num_levels {
                return Err(Error::Data(format!(
                    "record '{}' has {} rank labels, expected {}",
                    rec.id,
                    rec.labels.len(),
                    num_levels
                )));
            }
            let mut v: NodeId = 0;
            nodes[0].seq_count += 1;
            for (depth, label) in rec.labels.iter().enumerate() {
                if label.is_empty() {
                    return Err(Error::Data(format!(
                        "record '{}' has an empty label at rank '{}'",
                        rec.id, rank_names[depth]
                    )));
                }
                let key = (v, label.clone());
                let child = match child_of.get(&key) {
                    Some(&c) => c,
                    None => {
                        let c = nodes.len();
                        nodes.push(TaxonNode {
                            level: depth + 1,
                            label: label.clone(),
                            parent: Some(v),
                            children: Vec::new(),
                            seq_count: 0,
                        });
                        nodes[v].children.push(c);
                        child_of.insert(key, c);
                        c
                    }
                };
                nodes[child].seq_count += 1;
                v = child;
            }
            assignments.push(v);
        }

        let tree = Self::finalize(rank_names, nodes)?;
        Ok((tree, assignments))
    }

    /// Rebuilds a tree from persisted node tuples (arena order preserved,
    /// root first). Validates all structural invariants.
    pub fn from_topology(rank_names: Vec<String>, topo: Vec<TopoNode>) -> Result<Self> {
        if topo.is_empty() || topo[0].level != 0 || topo[0].parent.is_some() {
            return Err(Error::Data("model topology must start at the root".into()));
        }
        let mut nodes: Vec<TaxonNode> = Vec::with_capacity(topo.len());
        for (id, t) in topo.into_iter().enumerate() {
            match t.parent {
                None if id != 0 => {
                    return Err(Error::Data(format!("node {id} has no parent")));
                }
                Some(p) if p >= id => {
                    return Err(Error::Data(format!(
                        "node {id} references parent {p} out of order"
                    )));
                }
                Some(p) if nodes[p].level + 1 != t.level => {
                    return Err(Error::Data(format!(
                        "node {id} at level {} under a level-{} parent",
                        t.level, nodes[p].level
                    )));
                }
                _ => {}
            }
            if let Some(p) = t.parent {
                nodes[p].children.push(id);
            }
            nodes.push(TaxonNode {
                level: t.level,
                label: t.label,
                parent: t.parent,
                children: Vec::new(),
                seq_count: t.seq_count,
            });
        }
        Self::finalize(rank_names, nodes)
    }

    fn finalize(rank_names: Vec<String>, mut nodes: Vec<TaxonNode>) -> Result<Self> {
        let num_levels = rank_names.len();
        for v in 0..nodes.len() {
            let mut kids = std::mem::take(&mut nodes[v].children);
            kids.sort_by(|&a, &b| nodes[a].label.cmp(&nodes[b].label));
            nodes[v].children = kids;
        }
        for v in 0..nodes.len() {
            let node = &nodes[v];
            if node.level > num_levels {
                return Err(Error::Data(format!(
                    "node '{}' at level {} exceeds rank count {}",
                    node.label, node.level, num_levels
                )));
            }
            if node.seq_count == 0 {
                return Err(Error::Data(format!(
                    "observed node '{}' has no sequences",
                    node.label
                )));
            }
            if node.level < num_levels && node.children.is_empty() && nodes.len() > 1 {
                return Err(Error::Data(format!(
                    "internal node '{}' at level {} has no children",
                    node.label, node.level
                )));
            }
            if !node.children.is_empty() {
                let child_sum: u64 = node.children.iter().map(|&c| nodes[c].seq_count).sum();
                if child_sum != node.seq_count {
                    return Err(Error::Data(format!(
                        "node '{}': child sequence counts sum to {} but N(v) = {}",
                        node.label, child_sum, node.seq_count
                    )));
                }
            }
        }

        let mut leaves = Vec::new();
        let mut internal = Vec::new();
        let mut stack = vec![0usize];
        // Iterative pre-order DFS; children pushed in reverse so the sorted
        // (lexicographic) child is visited first.
        while let Some(v) = stack.pop() {
            if nodes[v].level == num_levels {
                leaves.push(v);
            } else {
                internal.push(v);
                for &c in nodes[v].children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        let mut leaf_pos = vec![NO_POS; nodes.len()];
        for (i, &v) in leaves.iter().enumerate() {
            leaf_pos[v] = i;
        }
        let mut internal_pos = vec![NO_POS; nodes.len()];
        for (i, &v) in internal.iter().enumerate() {
            internal_pos[v] = i;
        }

        Ok(Self {
            rank_names,
            nodes,
            leaves,
            internal,
            leaf_pos,
            internal_pos,
        })
    }

    /// Number of ranks L (the root's level 0 is not a rank).
    pub fn num_levels(&self) -> usize {
        self.rank_names.len()
    }

    /// Rank names, level 1 first.
    pub fn rank_names(&self) -> &[String] {
        &self.rank_names
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &TaxonNode {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Total training sequences n = N(root).
    pub fn total_sequences(&self) -> u64 {
        self.nodes[0].seq_count
    }

    /// Level-L leaves in canonical (depth-first lexicographic) order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Internal nodes (levels 0..L-1) in depth-first pre-order.
    pub fn internal_nodes(&self) -> &[NodeId] {
        &self.internal
    }

    /// Dense index of a leaf within [`Self::leaves`], if `id` is a leaf.
    pub fn leaf_index(&self, id: NodeId) -> Option<usize> {
        match self.leaf_pos[id] {
            NO_POS => None,
            i => Some(i),
        }
    }

    /// Dense index of an internal node within [`Self::internal_nodes`].
    pub fn internal_index(&self, id: NodeId) -> Option<usize> {
        match self.internal_pos[id] {
            NO_POS => None,
            i => Some(i),
        }
    }

    /// Looks up a child of `v` by label.
    pub fn child_by_label(&self, v: NodeId, label: &str) -> Option<NodeId> {
        self.nodes[v]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].label == label)
    }

    /// Resolves a full rank-label path to its deepest existing node,
    /// returning the node reached and its depth (0 = root only).
    pub fn deepest_observed(&self, labels: &[String]) -> (NodeId, usize) {
        let mut v = self.root();
        let mut depth = 0;
        for label in labels {
            match self.child_by_label(v, label) {
                Some(c) => {
                    v = c;
                    depth += 1;
                }
                None => break,
            }
        }
        (v, depth)
    }

    /// Labels along the branch from level 1 down to `id`.
    pub fn path_labels(&self, id: NodeId) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.nodes[id].level);
        let mut v = id;
        while let Some(p) = self.nodes[v].parent {
            out.push(self.nodes[v].label.as_str());
            v = p;
        }
        out.reverse();
        out
    }

    /// Branch rendered as "a/b/c" for reports and top-k listings.
    pub fn display_path(&self, id: NodeId) -> String {
        if id == self.root() {
            "root".to_string()
        } else {
            self.path_labels(id).join("/")
        }
    }

    /// Enumerates every candidate leaf in canonical order: depth-first with
    /// children in label order, emitting each observed leaf at its position
    /// and the novel pseudo-leaf of an anchor after the anchor's subtree.
    /// Candidates below any node therefore form a contiguous block.
    pub fn enumerate_candidates(&self) -> Vec<CandidateLeaf> {
        let mut out = Vec::with_capacity(self.leaves.len() + self.internal.len());
        self.push_candidates(self.root(), &mut out);
        out
    }

    fn push_candidates(&self, v: NodeId, out: &mut Vec<CandidateLeaf>) {
        if self.nodes[v].level == self.num_levels() {
            out.push(CandidateLeaf::Observed(v));
        } else {
            for &c in &self.nodes[v].children {
                self.push_candidates(c, out);
            }
            out.push(CandidateLeaf::Novel(v));
        }
    }
}

/// Replaces empty rank labels with deterministic dummy taxa so every record
/// carries a full L-tuple: an empty cell at level `l` becomes
/// `unk_<path of filled labels above>` (`unk_root` at level 1).
pub fn fill_missing_labels(labels: &mut [String]) {
    for i in 0..labels.len() {
        if labels[i].trim().is_empty() {
            labels[i] = if i == 0 {
                "unk_root".to_string()
            } else {
                format!("unk_{}", labels[..i].join("/"))
            };
        } else if labels[i].trim().len() != labels[i].len() {
            labels[i] = labels[i].trim().to_string();
        }
    }
}
