//! Empirical joint and product measures over a partition, the restricted
//! divergence `D_σ(π)(P̂‖Q̂*)`, and the per-sample quantized log-likelihood
//! ratio. The last two are the same quantity computed two ways: one sums over
//! cells, the other averages over samples.
//!
//! All logarithms are natural; convert with [`nats_to_base`] for reporting.

use std::io::Write;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::partition::{AxisCell, NodeId, TspTree};

/// Per-cell empirical probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasures {
    pub n: usize,
    pub counts: Vec<usize>,
    /// `P̂_n(A) = count / n`.
    pub joint: Vec<f64>,
    /// `Q̂*_n(A) = P̂_n(A¹ × R^q) · P̂_n(R^p × A²)`.
    pub product: Vec<f64>,
}

impl CellMeasures {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Debug table: `cell,count,joint,product`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "count", "joint", "product"])?;
        for i in 0..self.len() {
            w.write_record([
                i.to_string(),
                self.counts[i].to_string(),
                format!("{:?}", self.joint[i]),
                format!("{:?}", self.product[i]),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// One cell's contribution `P̂ ln(P̂/Q̂*)`, with `0·ln(0/·) = 0`.
#[inline]
pub fn divergence_term(joint: f64, product: f64) -> f64 {
    if joint == 0.0 {
        0.0
    } else {
        joint * (joint / product).ln()
    }
}

pub fn nats_to_base(nats: f64, base: f64) -> f64 {
    nats / base.ln()
}

fn check_cells(data: &Dataset, cells: &[AxisCell]) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("partition has no cells".into()));
    }
    for cell in cells {
        if cell.d() != data.d() {
            return Err(Error::DimensionMismatch {
                expected: data.d(),
                got: cell.d(),
            });
        }
    }
    Ok(())
}

/// Index `O_π(z_i)` of the cell holding each sample.
pub fn project(data: &Dataset, cells: &[AxisCell]) -> Result<Vec<usize>> {
    check_cells(data, cells)?;
    (0..data.n())
        .map(|i| {
            cells
                .iter()
                .position(|c| c.contains_row(data, i))
                .ok_or(Error::NotAPartition { index: i })
        })
        .collect()
}

fn counts_from_projection(projection: &[usize], cells: usize) -> Vec<usize> {
    let mut counts = vec![0usize; cells];
    for &o in projection {
        counts[o] += 1;
    }
    counts
}

/// `P̂_n(A)` for every cell.
pub fn empirical_joint(data: &Dataset, cells: &[AxisCell]) -> Result<Vec<f64>> {
    let projection = project(data, cells)?;
    let n = data.n() as f64;
    Ok(counts_from_projection(&projection, cells.len())
        .into_iter()
        .map(|c| c as f64 / n)
        .collect())
}

/// `Q̂*_n(A)` for every cell, from marginal memberships over the whole sample.
pub fn empirical_product(data: &Dataset, cells: &[AxisCell]) -> Result<Vec<f64>> {
    check_cells(data, cells)?;
    let index = MarginalIndex::new(data);
    Ok(cells.iter().map(|c| index.product_prob(c)).collect())
}

pub fn cell_measures(data: &Dataset, cells: &[AxisCell]) -> Result<CellMeasures> {
    let projection = project(data, cells)?;
    let counts = counts_from_projection(&projection, cells.len());
    measures_from_counts(data, cells, counts)
}

fn measures_from_counts(
    data: &Dataset,
    cells: &[AxisCell],
    counts: Vec<usize>,
) -> Result<CellMeasures> {
    let n = data.n();
    let index = MarginalIndex::new(data);
    let product = cells.iter().map(|c| index.product_prob(c)).collect();
    let joint = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(CellMeasures {
        n,
        counts,
        joint,
        product,
    })
}

/// `Σ_A P̂(A) ln(P̂(A)/Q̂*(A))` in nats.
pub fn restricted_divergence(measures: &CellMeasures) -> Result<f64> {
    let mut total = 0.0;
    for (cell, (&p, &q)) in measures.joint.iter().zip(&measures.product).enumerate() {
        if p > 0.0 && q <= 0.0 {
            return Err(Error::AbsoluteContinuity { cell });
        }
        total += divergence_term(p, q);
    }
    Ok(total)
}

/// `(1/n) Σ_i ln(P̂_O(o_i) / Q̂_O(o_i))` in nats, over the projected samples.
pub fn quantized_log_likelihood(data: &Dataset, cells: &[AxisCell]) -> Result<f64> {
    let projection = project(data, cells)?;
    let counts = counts_from_projection(&projection, cells.len());
    let measures = measures_from_counts(data, cells, counts)?;
    let mut sum = NeumaierSum::default();
    for &o in &projection {
        let (p, q) = (measures.joint[o], measures.product[o]);
        if q <= 0.0 {
            return Err(Error::AbsoluteContinuity { cell: o });
        }
        sum.add((p / q).ln());
    }
    Ok(sum.value() / data.n() as f64)
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sorted copy of every coordinate, for counting the samples whose X-block
/// (or Y-block) falls inside a box.
pub struct MarginalIndex<'a> {
    data: &'a Dataset,
    sorted: Vec<Vec<f64>>,
}

impl<'a> MarginalIndex<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let sorted = (0..data.d())
            .map(|c| {
                let mut col = data.column(c).to_vec();
                col.sort_unstable_by(f64::total_cmp);
                col
            })
            .collect();
        Self { data, sorted }
    }

    /// Samples with coordinates `offset..offset+bounds.len()` inside `bounds`.
    pub fn count_block(&self, offset: usize, bounds: &[(f64, f64)]) -> usize {
        let constrained: Vec<usize> = bounds
            .iter()
            .enumerate()
            .filter(|(_, (lo, hi))| lo.is_finite() || hi.is_finite())
            .map(|(j, _)| j)
            .collect();
        match constrained.as_slice() {
            [] => self.data.n(),
            &[j] => {
                let col = &self.sorted[offset + j];
                let (lo, hi) = bounds[j];
                let upto_hi = col.partition_point(|&v| v <= hi);
                let upto_lo = col.partition_point(|&v| v <= lo);
                upto_hi - upto_lo
            }
            many => (0..self.data.n())
                .filter(|&i| {
                    many.iter().all(|&j| {
                        let v = self.data.value(i, offset + j);
                        let (lo, hi) = bounds[j];
                        lo < v && v <= hi
                    })
                })
                .count(),
        }
    }

    pub fn product_prob(&self, cell: &AxisCell) -> f64 {
        let p = self.data.p();
        let n = self.data.n() as f64;
        let x = self.count_block(0, cell.x_block(p)) as f64 / n;
        let y = self.count_block(p, cell.y_block(p)) as f64 / n;
        x * y
    }
}

/// Joint and product probability of every node of a grown tree, plus its
/// divergence term. Shared by the pruning phase and the tree-based statistic.
#[derive(Debug, Clone)]
pub struct NodeMeasures {
    pub joint: Vec<f64>,
    pub product: Vec<f64>,
    pub term: Vec<f64>,
}

impl NodeMeasures {
    pub fn new(data: &Dataset, tree: &TspTree) -> Self {
        let index = MarginalIndex::new(data);
        let n = data.n() as f64;
        let mut joint = Vec::with_capacity(tree.len());
        let mut product = Vec::with_capacity(tree.len());
        let mut term = Vec::with_capacity(tree.len());
        for node in tree.nodes() {
            let pj = node.member_count() as f64 / n;
            let pq = index.product_prob(&node.cell);
            joint.push(pj);
            product.push(pq);
            term.push(divergence_term(pj, pq));
        }
        Self {
            joint,
            product,
            term,
        }
    }

    /// Divergence restricted to the cells of `leaves`.
    pub fn divergence(&self, leaves: &[NodeId]) -> f64 {
        leaves.iter().map(|&v| self.term[v]).sum()
    }

    /// Increase in divergence from replacing `v` by its children.
    pub fn split_gain(&self, tree: &TspTree, v: NodeId) -> Option<f64> {
        tree.node(v)
            .children
            .map(|(l, r)| self.term[l] + self.term[r] - self.term[v])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn ds(points: &[(f64, f64)]) -> Dataset {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        Dataset::from_rows(&rows, 1, 1).unwrap()
    }

    fn grid2x2(tx: f64, ty: f64) -> Vec<AxisCell> {
        let (ni, pi) = (f64::NEG_INFINITY, f64::INFINITY);
        vec![
            AxisCell::new(vec![(ni, tx), (ni, ty)]).unwrap(),
            AxisCell::new(vec![(ni, tx), (ty, pi)]).unwrap(),
            AxisCell::new(vec![(tx, pi), (ni, ty)]).unwrap(),
            AxisCell::new(vec![(tx, pi), (ty, pi)]).unwrap(),
        ]
    }

    fn diagonal() -> Dataset {
        ds(&[(0.0, 0.0), (0.0, 0.1), (1.0, 1.0), (1.0, 1.1)])
    }

    fn product_arranged() -> Dataset {
        ds(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)])
    }

    #[test]
    fn uniform_counts() {
        let joint = empirical_joint(&product_arranged(), &grid2x2(0.5, 0.5)).unwrap();
        assert_eq!(joint, vec![0.25; 4]);
    }

    #[test]
    fn trivial_partition() {
        let cells = vec![AxisCell::full(2)];
        let data = diagonal();
        assert_eq!(empirical_joint(&data, &cells).unwrap(), vec![1.0]);
        assert_eq!(empirical_product(&data, &cells).unwrap(), vec![1.0]);
        let m = cell_measures(&data, &cells).unwrap();
        assert_eq!(restricted_divergence(&m).unwrap(), 0.0);
        assert_eq!(quantized_log_likelihood(&data, &cells).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_dataset_on_grid() {
        let data = diagonal();
        let cells = grid2x2(0.5, 0.5);
        assert_eq!(empirical_joint(&data, &cells).unwrap(), vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(empirical_product(&data, &cells).unwrap(), vec![0.25; 4]);
        let m = cell_measures(&data, &cells).unwrap();
        assert_abs_diff_eq!(restricted_divergence(&m).unwrap(), LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(
            quantized_log_likelihood(&data, &cells).unwrap(),
            LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn product_arranged_dataset_has_zero_divergence() {
        let data = product_arranged();
        let cells = grid2x2(0.5, 0.5);
        let m = cell_measures(&data, &cells).unwrap();
        assert_eq!(m.product, vec![0.25; 4]);
        assert_eq!(m.joint, m.product);
        assert_eq!(restricted_divergence(&m).unwrap(), 0.0);
    }

    #[test]
    fn absolute_continuity_violation_is_reported() {
        let m = CellMeasures {
            n: 2,
            counts: vec![1, 1],
            joint: vec![0.5, 0.5],
            product: vec![1.0, 0.0],
        };
        assert_eq!(
            restricted_divergence(&m),
            Err(Error::AbsoluteContinuity { cell: 1 })
        );
    }

    #[test]
    fn uncovered_point_is_reported() {
        let cells = vec![AxisCell::new(vec![(0.5, 2.0), (f64::NEG_INFINITY, f64::INFINITY)]).unwrap()];
        assert_eq!(
            empirical_joint(&diagonal(), &cells),
            Err(Error::NotAPartition { index: 0 })
        );
    }

    #[test]
    fn marginal_index_counts_multi_coordinate_boxes() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, (i % 5) as f64, (i % 3) as f64])
            .collect();
        let data = Dataset::from_rows(&rows, 2, 1).unwrap();
        let index = MarginalIndex::new(&data);
        let bounds = [(2.0, 12.0), (1.0, 3.0)];
        let brute = (0..20)
            .filter(|&i| {
                let (a, b) = (i as f64, (i % 5) as f64);
                2.0 < a && a <= 12.0 && 1.0 < b && b <= 3.0
            })
            .count();
        assert_eq!(index.count_block(0, &bounds), brute);
        assert_eq!(index.count_block(2, &[(0.0, 1.0)]), 7);
    }

    #[test]
    fn measures_csv_has_header_and_rows() {
        let m = cell_measures(&diagonal(), &grid2x2(0.5, 0.5)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cell,count,joint,product\n0,2,0.5,0.25\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn base_conversion() {
        assert_abs_diff_eq!(nats_to_base(LN_2, 2.0), 1.0, epsilon = 1e-15);
    }
}
