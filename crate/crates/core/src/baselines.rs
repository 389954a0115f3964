//! Non-adaptive binning tests: L1, log-likelihood and Pearson χ² on a fixed
//! product grid with `m(n) = floor(n^p_exp)` bins per coordinate.
//!
//! Bins are equiprobable marginal quantiles by default, so every statistic
//! depends on the data only through coordinate ranks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::partition::AxisCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMode {
    #[default]
    Quantile,
    EqualWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    L1,
    Loglik,
    Chi2,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::L1, Self::Loglik, Self::Chi2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::Loglik => "loglik",
            Self::Chi2 => "chi2",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Self::L1),
            "loglik" => Ok(Self::Loglik),
            "chi2" => Ok(Self::Chi2),
            other => Err(Error::InvalidArgument(format!(
                "unknown baseline `{other}` (expected l1, loglik or chi2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Bin-growth exponent in (0, 0.5).
    pub p_exp: f64,
    /// Threshold multiplier.
    pub c: f64,
    #[serde(default)]
    pub binning: BinningMode,
}

impl GridSpec {
    pub fn new(p_exp: f64, c: f64) -> Result<Self> {
        let s = Self {
            p_exp,
            c,
            binning: BinningMode::Quantile,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_exp > 0.0 && self.p_exp < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "p_exp must lie in (0, 0.5), got {}",
                self.p_exp
            )));
        }
        if !(self.c >= 0.0) {
            return Err(Error::InvalidArgument(format!("C must be >= 0, got {}", self.c)));
        }
        Ok(())
    }

    /// `floor(n^p_exp)`, at least 1.
    pub fn bins(&self, n: usize) -> usize {
        // The nudge keeps exact powers such as 32^0.2 from flooring down.
        ((n as f64).powf(self.p_exp) + 1e-9).floor().max(1.0) as usize
    }
}

/// Product grid given by interior edges per coordinate. Bin `j` of a
/// coordinate is `(e_{j-1}, e_j]` with `e_0 = −∞` and `e_m = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGrid {
    pub edges: Vec<Vec<f64>>,
    pub p: usize,
}

impl ProductGrid {
    pub fn d(&self) -> usize {
        self.edges.len()
    }

    pub fn bins(&self, coord: usize) -> usize {
        self.edges[coord].len() + 1
    }

    /// Cell count of the X block.
    pub fn x_cells(&self) -> usize {
        (0..self.p).map(|c| self.bins(c)).product()
    }

    pub fn y_cells(&self) -> usize {
        (self.p..self.d()).map(|c| self.bins(c)).product()
    }

    fn bin_of(&self, coord: usize, v: f64) -> usize {
        self.edges[coord].partition_point(|&e| e < v)
    }

    fn block_index(&self, data: &Dataset, row: usize, coords: std::ops::Range<usize>) -> usize {
        coords.fold(0, |acc, c| acc * self.bins(c) + self.bin_of(c, data.value(row, c)))
    }

    /// Every cell of the grid, X-block major. Only meant for small grids.
    pub fn cells(&self) -> Vec<AxisCell> {
        let mut cells = vec![Vec::new()];
        for edges in &self.edges {
            let mut bounds = vec![f64::NEG_INFINITY];
            bounds.extend_from_slice(edges);
            bounds.push(f64::INFINITY);
            cells = cells
                .into_iter()
                .flat_map(|prefix: Vec<(f64, f64)>| {
                    bounds.windows(2).map(move |w| {
                        let mut next = prefix.clone();
                        next.push((w[0], w[1]));
                        next
                    })
                })
                .collect();
        }
        cells
            .into_iter()
            .map(|b| AxisCell::new(b).expect("grid bounds are ordered"))
            .collect()
    }
}

fn quantile_edges(values: &[f64], m: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (1..m)
        .map(|j| {
            // The ceil(j·n/m)-th order statistic.
            let rank = (j * n).div_ceil(m).max(1);
            sorted[rank - 1]
        })
        .collect()
}

fn equal_width_edges(values: &[f64], m: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (1..m).map(|j| lo + (hi - lo) * j as f64 / m as f64).collect()
}

/// `m` bins per coordinate; coinciding edges are merged.
pub fn product_grid(data: &Dataset, m: usize, mode: BinningMode) -> Result<ProductGrid> {
    if m < 1 {
        return Err(Error::InvalidArgument("grid needs m >= 1".into()));
    }
    let edges = (0..data.d())
        .map(|c| {
            let col = data.column(c);
            let mut e = match mode {
                BinningMode::Quantile => quantile_edges(col, m),
                BinningMode::EqualWidth => equal_width_edges(col, m),
            };
            let before = e.len();
            e.dedup();
            if e.len() < before {
                log::warn!(
                    "coordinate {c}: {} duplicate bin edges merged, {} bins remain",
                    before - e.len(),
                    e.len() + 1
                );
            }
            e
        })
        .collect();
    Ok(ProductGrid { edges, p: data.p() })
}

/// All three statistics of one dataset on one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStatistics {
    pub n: usize,
    pub l1: f64,
    pub loglik: f64,
    /// Includes the factor `n`.
    pub chi2: f64,
    pub x_cells: usize,
    pub y_cells: usize,
}

impl GridStatistics {
    pub fn get(&self, kind: BaselineKind) -> f64 {
        match kind {
            BaselineKind::L1 => self.l1,
            BaselineKind::Loglik => self.loglik,
            BaselineKind::Chi2 => self.chi2,
        }
    }

    /// Threshold shape for `kind`, to be scaled by `C`.
    pub fn threshold_shape(&self, kind: BaselineKind) -> f64 {
        let ratio = (self.x_cells * self.y_cells) as f64 / self.n as f64;
        match kind {
            BaselineKind::L1 => ratio.sqrt(),
            BaselineKind::Loglik | BaselineKind::Chi2 => ratio,
        }
    }

    /// The quantity compared against `C · shape`. For χ² this is the
    /// statistic divided by `n`, which puts it on the loglik scale.
    pub fn normalized(&self, kind: BaselineKind) -> f64 {
        match kind {
            BaselineKind::Chi2 => self.chi2 / self.n as f64,
            _ => self.get(kind),
        }
    }

    pub fn decide(&self, kind: BaselineKind, c: f64) -> bool {
        self.normalized(kind) >= c * self.threshold_shape(kind)
    }
}

pub fn grid_statistics(data: &Dataset, grid: &ProductGrid) -> Result<GridStatistics> {
    if grid.d() != data.d() || grid.p != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            got: grid.d(),
        });
    }
    let n = data.n();
    let p = data.p();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut xs: HashMap<usize, usize> = HashMap::new();
    let mut ys: HashMap<usize, usize> = HashMap::new();
    for row in 0..n {
        let ix = grid.block_index(data, row, 0..p);
        let iy = grid.block_index(data, row, p..data.d());
        *joint.entry((ix, iy)).or_default() += 1;
        *xs.entry(ix).or_default() += 1;
        *ys.entry(iy).or_default() += 1;
    }
    let nf = n as f64;
    // Deterministic order keeps the sums bit-reproducible.
    let mut cells: Vec<_> = joint.into_iter().collect();
    cells.sort_unstable();
    let mut l1 = 0.0;
    let mut loglik = 0.0;
    let mut chi2 = 0.0;
    let mut covered = 0.0;
    for ((ix, iy), count) in cells {
        let pj = count as f64 / nf;
        let q = (xs[&ix] as f64 / nf) * (ys[&iy] as f64 / nf);
        l1 += (pj - q).abs();
        loglik += pj * (pj / q).ln();
        chi2 += (pj - q) * (pj - q) / q;
        covered += q;
    }
    // Empty cells with positive product mass contribute |0 − Q| and Q.
    let uncovered = (1.0 - covered).max(0.0);
    Ok(GridStatistics {
        n,
        l1: l1 + uncovered,
        loglik: loglik.max(0.0),
        chi2: nf * (chi2 + uncovered),
        x_cells: grid.x_cells(),
        y_cells: grid.y_cells(),
    })
}

pub fn l1_statistic(data: &Dataset, grid: &ProductGrid) -> Result<f64> {
    Ok(grid_statistics(data, grid)?.l1)
}

pub fn loglik_statistic(data: &Dataset, grid: &ProductGrid) -> Result<f64> {
    Ok(grid_statistics(data, grid)?.loglik)
}

pub fn chi2_statistic(data: &Dataset, grid: &ProductGrid) -> Result<f64> {
    Ok(grid_statistics(data, grid)?.chi2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineDecision {
    pub kind: BaselineKind,
    pub decision: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub bins: usize,
}

pub fn baseline_decide(data: &Dataset, spec: &GridSpec, kind: BaselineKind) -> Result<BaselineDecision> {
    spec.validate()?;
    let m = spec.bins(data.n());
    let grid = product_grid(data, m, spec.binning)?;
    let stats = grid_statistics(data, &grid)?;
    Ok(BaselineDecision {
        kind,
        decision: stats.decide(kind, spec.c),
        statistic: stats.get(kind),
        threshold: spec.c * stats.threshold_shape(kind),
        bins: m,
    })
}

/// Serialized baseline decision; shares the core fields of the TSP record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub kind: BaselineKind,
    pub p_exp: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub bins: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub decision: u8,
}

impl BaselineRecord {
    pub fn new(data: &Dataset, spec: &GridSpec, d: &BaselineDecision) -> Self {
        Self {
            n: data.n(),
            p: data.p(),
            q: data.q(),
            kind: d.kind,
            p_exp: spec.p_exp,
            c: spec.c,
            bins: d.bins,
            statistic: d.statistic,
            threshold: d.threshold,
            decision: u8::from(d.decision),
        }
    }
}
