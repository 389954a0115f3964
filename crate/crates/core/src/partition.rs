//! Growing phase: statistically equivalent (median) splits of axis-aligned
//! cells, stopped by a floor on the empirical probability of every child.
//!
//! Cells are half-open boxes `(lower, upper]` per coordinate, unbounded on the
//! outer frontier, so the leaves of any tree cover all of `R^d`. Every box is a
//! product of an X-block box and a Y-block box.

use std::collections::VecDeque;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Product of half-open intervals `(lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisCell {
    bounds: Vec<(f64, f64)>,
}

impl AxisCell {
    /// The whole space `R^d`.
    pub fn full(d: usize) -> Self {
        Self {
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); d],
        }
    }

    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (c, &(lo, hi)) in bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "empty interval ({lo}, {hi}] on coordinate {c}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn d(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    #[inline]
    pub fn contains(&self, point: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(point)
            .all(|(&(lo, hi), &v)| lo < v && v <= hi)
    }

    #[inline]
    pub fn contains_row(&self, data: &Dataset, row: usize) -> bool {
        self.bounds
            .iter()
            .enumerate()
            .all(|(c, &(lo, hi))| {
                let v = data.value(row, c);
                lo < v && v <= hi
            })
    }

    /// Bounds of the X-block factor `A¹` (first `p` coordinates).
    pub fn x_block(&self, p: usize) -> &[(f64, f64)] {
        &self.bounds[..p]
    }

    /// Bounds of the Y-block factor `A²`.
    pub fn y_block(&self, p: usize) -> &[(f64, f64)] {
        &self.bounds[p..]
    }

    fn with_upper(&self, coord: usize, upper: f64) -> Self {
        let mut bounds = self.bounds.clone();
        bounds[coord].1 = upper;
        Self { bounds }
    }

    fn with_lower(&self, coord: usize, lower: f64) -> Self {
        let mut bounds = self.bounds.clone();
        bounds[coord].0 = lower;
        Self { bounds }
    }
}

/// Why a median split could not be made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRefusal {
    /// Fewer than two values.
    TooFew,
    /// Every value would land on the same side (all values tied, or the
    /// median ties with the maximum).
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplit {
    pub threshold: f64,
    /// Positions (into the input) of values `<= threshold`, ascending.
    pub left: Vec<usize>,
    /// Positions of values `> threshold`, ascending.
    pub right: Vec<usize>,
}

/// Splits `values` at their `ceil(m/2)`-th order statistic.
pub fn median_split(values: &[f64]) -> std::result::Result<MedianSplit, SplitRefusal> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let (threshold, left_len) = split_in_place(&mut idx, values)?;
    let mut left = idx[..left_len].to_vec();
    let mut right = idx[left_len..].to_vec();
    left.sort_unstable();
    right.sort_unstable();
    Ok(MedianSplit {
        threshold,
        left,
        right,
    })
}

/// Reorders `idx` so that the members with `column[i] <= threshold` come
/// first; returns the threshold and how many went left.
fn split_in_place(
    idx: &mut [usize],
    column: &[f64],
) -> std::result::Result<(f64, usize), SplitRefusal> {
    let m = idx.len();
    if m < 2 {
        return Err(SplitRefusal::TooFew);
    }
    let k = m.div_ceil(2) - 1;
    idx.select_nth_unstable_by(k, |&a, &b| column[a].total_cmp(&column[b]));
    let threshold = column[idx[k]];
    // Values tied with the threshold may sit right of k; pull them left.
    let mut write = k + 1;
    for read in k + 1..m {
        if column[idx[read]] <= threshold {
            idx.swap(write, read);
            write += 1;
        }
    }
    if write == m {
        return Err(SplitRefusal::Degenerate);
    }
    Ok((threshold, write))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Split {
    pub coord: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct TspNode {
    pub id: NodeId,
    pub depth: usize,
    pub cell: AxisCell,
    pub split: Option<Split>,
    pub children: Option<(NodeId, NodeId)>,
    range: (usize, usize),
}

impl TspNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn member_count(&self) -> usize {
        self.range.1 - self.range.0
    }
}

/// The full tree `T^full_b` produced by the growing phase. Immutable once
/// built.
#[derive(Debug, Clone)]
pub struct TspTree {
    nodes: Vec<TspNode>,
    /// Sample indices; every node owns a contiguous range.
    order: Vec<usize>,
    n: usize,
    b: f64,
    min_count: usize,
    p: usize,
    q: usize,
}

impl TspTree {
    pub const ROOT: NodeId = 0;

    pub fn node(&self, id: NodeId) -> &TspNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TspNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.p + self.q
    }

    /// `ceil(b·n)`: the smallest member count any node may have.
    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn member_indices(&self, id: NodeId) -> &[usize] {
        let (s, e) = self.nodes[id].range;
        &self.order[s..e]
    }

    /// Leaf ids in ascending order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|v| v.is_leaf())
            .map(|v| v.id)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|v| v.is_leaf()).count()
    }

    /// The leaf whose cell contains `point`.
    pub fn locate(&self, point: &[f64]) -> NodeId {
        self.locate_within(point, |_| false)
    }

    /// Descends from the root, stopping early at any node for which `stop`
    /// returns true. Used to project onto the leaves of a pruned subtree.
    pub fn locate_within(&self, point: &[f64], stop: impl Fn(NodeId) -> bool) -> NodeId {
        let mut id = Self::ROOT;
        loop {
            let node = &self.nodes[id];
            match (node.split, node.children) {
                (Some(s), Some((l, r))) if !stop(id) => {
                    id = if point[s.coord] <= s.threshold { l } else { r };
                }
                _ => return id,
            }
        }
    }

    /// JSON document of the tree: ids, bounds (`null` = unbounded), splits,
    /// children and member counts.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<NodeDoc> = self
            .nodes
            .iter()
            .map(|v| NodeDoc {
                id: v.id,
                depth: v.depth,
                member_count: v.member_count(),
                bounds: v
                    .cell
                    .bounds()
                    .iter()
                    .map(|&(lo, hi)| [finite(lo), finite(hi)])
                    .collect(),
                split: v.split,
                children: v.children.map(|(l, r)| [l, r]),
            })
            .collect();
        serde_json::to_value(TreeDoc {
            n: self.n,
            b: self.b,
            p: self.p,
            q: self.q,
            root: Self::ROOT,
            leaf_count: self.leaf_count(),
            nodes,
        })
        .expect("tree document is always serializable")
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct TreeDoc {
    n: usize,
    b: f64,
    p: usize,
    q: usize,
    root: NodeId,
    leaf_count: usize,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize)]
struct NodeDoc {
    id: NodeId,
    depth: usize,
    member_count: usize,
    bounds: Vec<[Option<f64>; 2]>,
    split: Option<Split>,
    children: Option<[NodeId; 2]>,
}

/// `ceil(b·n)`, never below one sample.
pub fn min_member_count(b: f64, n: usize) -> usize {
    // Guard against b·n landing a hair above an integer through rounding.
    let raw = b * n as f64;
    let rounded = raw.round();
    let c = if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded
    } else {
        raw.ceil()
    };
    (c as usize).max(1)
}

/// Grows `T^full_b` breadth-first. The split coordinate cycles with depth
/// (root on coordinate 0); a coordinate whose values are all tied inside the
/// cell is skipped for the next one. A split is made only when both children
/// keep at least `ceil(b·n)` samples.
pub fn grow_full_tree(data: &Dataset, b: f64) -> Result<TspTree> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability floor b={b} outside (0,1)"
        )));
    }
    let n = data.n();
    let d = data.d();
    let min_count = min_member_count(b, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut nodes = vec![TspNode {
        id: TspTree::ROOT,
        depth: 0,
        cell: AxisCell::full(d),
        split: None,
        children: None,
        range: (0, n),
    }];

    let mut queue = VecDeque::from([TspTree::ROOT]);
    while let Some(id) = queue.pop_front() {
        let (start, end) = nodes[id].range;
        let m = end - start;
        if m < 2 * min_count {
            continue;
        }
        let depth = nodes[id].depth;
        let members = &mut order[start..end];
        let mut chosen = None;
        for attempt in 0..d {
            let coord = (depth + attempt) % d;
            match split_in_place(members, data.column(coord)) {
                Ok((threshold, left_len)) => {
                    if left_len >= min_count && m - left_len >= min_count {
                        chosen = Some((coord, threshold, left_len));
                    }
                    break;
                }
                Err(SplitRefusal::Degenerate) => continue,
                Err(SplitRefusal::TooFew) => break,
            }
        }
        let Some((coord, threshold, left_len)) = chosen else {
            continue;
        };
        let left_id = nodes.len();
        let right_id = left_id + 1;
        let parent_cell = nodes[id].cell.clone();
        nodes.push(TspNode {
            id: left_id,
            depth: depth + 1,
            cell: parent_cell.with_upper(coord, threshold),
            split: None,
            children: None,
            range: (start, start + left_len),
        });
        nodes.push(TspNode {
            id: right_id,
            depth: depth + 1,
            cell: parent_cell.with_lower(coord, threshold),
            split: None,
            children: None,
            range: (start + left_len, end),
        });
        nodes[id].split = Some(Split { coord, threshold });
        nodes[id].children = Some((left_id, right_id));
        queue.push_back(left_id);
        queue.push_back(right_id);
    }

    Ok(TspTree {
        nodes,
        order,
        n,
        b,
        min_count,
        p: data.p(),
        q: data.q(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> Dataset {
        let rows: Vec<Vec<f64>> = [
            (0., 0.),
            (0., 1.),
            (1., 0.),
            (1., 1.),
            (2., 0.),
            (2., 1.),
            (3., 0.),
            (3., 1.),
        ]
        .iter()
        .map(|&(x, y)| vec![x, y])
        .collect();
        Dataset::from_rows(&rows, 1, 1).unwrap()
    }

    #[test]
    fn median_split_even() {
        let s = median_split(&[1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(s.threshold, 3.0);
        assert_eq!(s.left, vec![0, 1, 2]);
        assert_eq!(s.right, vec![3, 4, 5]);
    }

    #[test]
    fn median_split_odd_puts_extra_left() {
        let s = median_split(&[5., 1., 4., 2., 3.]).unwrap();
        assert_eq!(s.threshold, 3.0);
        assert_eq!(s.left, vec![1, 3, 4]);
        assert_eq!(s.right, vec![0, 2]);
    }

    #[test]
    fn median_split_refusals() {
        assert_eq!(median_split(&[7., 7., 7., 7.]), Err(SplitRefusal::Degenerate));
        assert_eq!(median_split(&[1., 2., 2., 2.]), Err(SplitRefusal::Degenerate));
        assert_eq!(median_split(&[1.]), Err(SplitRefusal::TooFew));
        assert_eq!(median_split(&[]), Err(SplitRefusal::TooFew));
    }

    #[test]
    fn median_split_ties_go_left() {
        let s = median_split(&[1., 2., 2., 3.]).unwrap();
        assert_eq!(s.threshold, 2.0);
        assert_eq!(s.left, vec![0, 1, 2]);
        assert_eq!(s.right, vec![3]);
    }

    #[test]
    fn grows_the_hand_traced_grid() {
        let tree = grow_full_tree(&grid8(), 0.25).unwrap();
        assert_eq!(tree.min_count(), 2);
        assert_eq!(tree.leaf_count(), 4);
        let root = tree.node(TspTree::ROOT);
        assert_eq!(
            root.split,
            Some(Split {
                coord: 0,
                threshold: 1.0
            })
        );
        let (l, r) = root.children.unwrap();
        for child in [l, r] {
            let s = tree.node(child).split.unwrap();
            assert_eq!(s.coord, 1);
            assert_eq!(s.threshold, 0.0);
        }
        for leaf in tree.leaves() {
            assert_eq!(tree.node(leaf).member_count(), 2);
        }
        // (0.5, -0.2) lands with (0,0) and (1,0).
        let leaf = tree.locate(&[0.5, -0.2]);
        let mut members = tree.member_indices(leaf).to_vec();
        members.sort_unstable();
        assert_eq!(members, vec![0, 2]);
    }

    #[test]
    fn boundary_goes_left() {
        let tree = grow_full_tree(&grid8(), 0.25).unwrap();
        let (l, _) = tree.node(TspTree::ROOT).children.unwrap();
        let leaf = tree.locate(&[1.0, 0.0]);
        let (ll, _) = tree.node(l).children.unwrap();
        assert_eq!(leaf, ll);
    }

    #[test]
    fn large_floor_gives_root_only() {
        let tree = grow_full_tree(&grid8(), 0.6).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.locate(&[100.0, -3.0]), TspTree::ROOT);
    }

    #[test]
    fn degenerate_coordinate_is_skipped() {
        // First coordinate constant: root must split on the second.
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64]).collect();
        let ds = Dataset::from_rows(&rows, 1, 1).unwrap();
        let tree = grow_full_tree(&ds, 0.25).unwrap();
        assert_eq!(tree.node(0).split.unwrap().coord, 1);
        assert_eq!(tree.leaf_count(), 4);
        // Fully constant data cannot be split at all.
        let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![1.0, 2.0]).collect();
        let ds = Dataset::from_rows(&rows, 1, 1).unwrap();
        assert_eq!(grow_full_tree(&ds, 0.1).unwrap().len(), 1);
    }

    #[test]
    fn rejects_floor_outside_unit_interval() {
        assert!(grow_full_tree(&grid8(), 0.0).is_err());
        assert!(grow_full_tree(&grid8(), 1.0).is_err());
        assert!(grow_full_tree(&grid8(), f64::NAN).is_err());
    }

    #[test]
    fn min_member_count_is_robust_to_rounding() {
        assert_eq!(min_member_count(0.25, 8), 2);
        assert_eq!(min_member_count(0.1, 30), 3);
        assert_eq!(min_member_count(0.6, 8), 5);
        assert_eq!(min_member_count(1e-9, 10), 1);
    }

    #[test]
    fn json_document_marks_unbounded_as_null() {
        let tree = grow_full_tree(&grid8(), 0.25).unwrap();
        let doc = tree.to_json();
        assert_eq!(doc["leaf_count"], 4);
        assert_eq!(doc["nodes"][0]["bounds"][0][0], serde_json::Value::Null);
        assert_eq!(doc["nodes"][1]["bounds"][0][1], 1.0);
        assert_eq!(doc["nodes"][0]["children"], serde_json::json!([1, 2]));
    }
}
