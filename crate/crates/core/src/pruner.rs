//! Pruning phase. The greedy pass builds one pruned subtree per size, each
//! obtained from the previous one by expanding the leaf with the largest
//! divergence gain; the regularized selection then picks the size that
//! maximizes `D_k − α·r(k)`.
//!
//! [`brute_force_best_of_size`] enumerates every pruned subtree and is only
//! meant as a test oracle for small trees.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::infostat::{cell_measures, restricted_divergence, NodeMeasures};
use crate::partition::{AxisCell, NodeId, TspTree};
use crate::regularizer::penalty_r;

/// Leaf frontier of a pruned subtree sharing the full tree's root.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSet {
    /// Ascending node ids.
    pub leaves: Vec<NodeId>,
    /// Restricted divergence over the leaves' cells, in nats.
    pub divergence: f64,
}

impl LeafSet {
    pub fn root() -> Self {
        Self {
            leaves: vec![TspTree::ROOT],
            divergence: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn cells(&self, tree: &TspTree) -> Vec<AxisCell> {
        self.leaves
            .iter()
            .map(|&v| tree.node(v).cell.clone())
            .collect()
    }

    /// Whether these ids are exactly the leaves of some pruned subtree of
    /// `tree`: every root-to-leaf path of the full tree crosses exactly one
    /// of them.
    pub fn is_valid_frontier(&self, tree: &TspTree) -> bool {
        if self.leaves.iter().any(|&v| v >= tree.len()) {
            return false;
        }
        // Every root-to-leaf path must meet exactly one chosen node.
        fn exactly_once(tree: &TspTree, v: NodeId, set: &[NodeId], above: bool) -> bool {
            let here = set.binary_search(&v).is_ok();
            if here && above {
                return false;
            }
            match tree.node(v).children {
                Some((l, r)) => {
                    exactly_once(tree, l, set, above || here)
                        && exactly_once(tree, r, set, above || here)
                }
                None => above || here,
            }
        }
        self.leaves.windows(2).all(|w| w[0] < w[1])
            && exactly_once(tree, TspTree::ROOT, &self.leaves, false)
    }

    /// Sample-by-sample projection onto this frontier.
    pub fn locate(&self, tree: &TspTree, point: &[f64]) -> NodeId {
        tree.locate_within(point, |v| self.leaves.binary_search(&v).is_ok())
    }
}

/// Nested pruned subtrees of sizes `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedFamily {
    d: usize,
    /// Node expanded to go from size `k` to `k + 1`.
    splits: Vec<NodeId>,
    children: Vec<(NodeId, NodeId)>,
    /// `divergences[k - 1]` is the divergence of the size-`k` member.
    divergences: Vec<f64>,
}

impl EmbeddedFamily {
    /// Number of members (equals the full tree's leaf count).
    pub fn len(&self) -> usize {
        self.divergences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.divergences.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn divergences(&self) -> &[f64] {
        &self.divergences
    }

    pub fn split_order(&self) -> &[NodeId] {
        &self.splits
    }

    /// The size-`k` member (1-based).
    pub fn member(&self, k: usize) -> LeafSet {
        assert!(k >= 1 && k <= self.len(), "family has no member of size {k}");
        let mut leaves = vec![TspTree::ROOT];
        for (&v, &(l, r)) in self.splits.iter().zip(&self.children).take(k - 1) {
            let pos = leaves.binary_search(&v).expect("expanded node is a leaf");
            leaves.remove(pos);
            for c in [l, r] {
                let at = leaves.binary_search(&c).unwrap_err();
                leaves.insert(at, c);
            }
        }
        LeafSet {
            leaves,
            divergence: self.divergences[k - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    gain: f64,
    id: NodeId,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Larger gain first, then the smaller id.
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| Reverse(self.id).cmp(&Reverse(other.id)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn embedded_family(data: &Dataset, tree: &TspTree) -> EmbeddedFamily {
    let measures = NodeMeasures::new(data, tree);
    embedded_family_from_measures(tree, &measures)
}

/// Greedy forward expansion. The gain of expanding `v` only involves `v` and
/// its two children, so it is computed once per node.
pub fn embedded_family_from_measures(tree: &TspTree, measures: &NodeMeasures) -> EmbeddedFamily {
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Candidate>, v: NodeId| {
        if let Some(gain) = measures.split_gain(tree, v) {
            heap.push(Candidate { gain, id: v });
        }
    };
    push(&mut heap, TspTree::ROOT);
    let mut splits = Vec::new();
    let mut children = Vec::new();
    let mut divergences = vec![measures.term[TspTree::ROOT]];
    while let Some(Candidate { gain, id }) = heap.pop() {
        let (l, r) = tree.node(id).children.expect("candidates are internal nodes");
        splits.push(id);
        children.push((l, r));
        let last = *divergences.last().expect("family starts with the root");
        divergences.push(last + gain);
        push(&mut heap, l);
        push(&mut heap, r);
    }
    EmbeddedFamily {
        d: tree.d(),
        splits,
        children,
        divergences,
    }
}

/// Outcome of the regularized selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub leaf_set: LeafSet,
    /// `D_k − α·r(k)` at the chosen size.
    pub objective: f64,
    pub penalty: f64,
}

impl Selection {
    pub fn k(&self) -> usize {
        self.leaf_set.len()
    }
}

/// `argmax_k D_k − α·r_{b,δ}(k)` over the family; ties go to the smaller k.
pub fn select_regularized(
    family: &EmbeddedFamily,
    n: usize,
    b: f64,
    delta: f64,
    alpha: f64,
) -> Result<Selection> {
    let k = select_size(family, n, b, delta, alpha)?;
    let penalty = penalty_r(n, b, family.d, delta, k)?;
    let leaf_set = family.member(k);
    Ok(Selection {
        objective: leaf_set.divergence - alpha * penalty,
        leaf_set,
        penalty,
    })
}

/// Size chosen by [`select_regularized`], without materializing the leaves.
pub fn select_size(
    family: &EmbeddedFamily,
    n: usize,
    b: f64,
    delta: f64,
    alpha: f64,
) -> Result<usize> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let mut best_k = 1;
    let mut best = family.divergences[0] - alpha * penalty_r(n, b, family.d, delta, 1)?;
    for k in 2..=family.len() {
        let objective = family.divergences[k - 1] - alpha * penalty_r(n, b, family.d, delta, k)?;
        if objective > best {
            best = objective;
            best_k = k;
        }
    }
    Ok(best_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRow {
    pub k: usize,
    pub divergence_nats: f64,
    pub penalty: f64,
    pub objective: f64,
}

pub fn family_table(
    family: &EmbeddedFamily,
    n: usize,
    b: f64,
    delta: f64,
    alpha: f64,
) -> Result<Vec<FamilyRow>> {
    (1..=family.len())
        .map(|k| {
            let penalty = penalty_r(n, b, family.d, delta, k)?;
            let divergence_nats = family.divergences[k - 1];
            Ok(FamilyRow {
                k,
                divergence_nats,
                penalty,
                objective: divergence_nats - alpha * penalty,
            })
        })
        .collect()
}

pub fn write_family_csv<W: Write>(rows: &[FamilyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "divergence_nats", "penalty", "objective"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format!("{:?}", r.divergence_nats),
            format!("{:?}", r.penalty),
            format!("{:?}", r.objective),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Largest tree the exhaustive oracle accepts.
pub const ORACLE_MAX_LEAVES: usize = 10;

/// Enumerates every pruned subtree with exactly `k` leaves and returns the
/// one with the largest divergence, each candidate evaluated from scratch on
/// its cells. Ties go to the lexicographically smallest leaf list.
pub fn brute_force_best_of_size(data: &Dataset, tree: &TspTree, k: usize) -> Result<LeafSet> {
    let total = tree.leaf_count();
    if total > ORACLE_MAX_LEAVES {
        return Err(Error::OracleTooLarge {
            max: ORACLE_MAX_LEAVES,
            got: total,
        });
    }
    if k == 0 || k > total {
        return Err(Error::InvalidArgument(format!(
            "no pruned subtree has {k} leaves (full tree has {total})"
        )));
    }
    let mut best: Option<LeafSet> = None;
    for mut leaves in frontiers(tree, TspTree::ROOT) {
        if leaves.len() != k {
            continue;
        }
        leaves.sort_unstable();
        let cells: Vec<AxisCell> = leaves.iter().map(|&v| tree.node(v).cell.clone()).collect();
        let divergence = restricted_divergence(&cell_measures(data, &cells)?)?;
        let better = match &best {
            None => true,
            Some(b) => {
                divergence > b.divergence || (divergence == b.divergence && leaves < b.leaves)
            }
        };
        if better {
            best = Some(LeafSet { leaves, divergence });
        }
    }
    Ok(best.expect("a subtree of every size 1..=K exists"))
}

fn frontiers(tree: &TspTree, v: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = vec![vec![v]];
    if let Some((l, r)) = tree.node(v).children {
        let left = frontiers(tree, l);
        let right = frontiers(tree, r);
        for a in &left {
            for b in &right {
                out.push(a.iter().chain(b).copied().collect());
            }
        }
    }
    out
}
