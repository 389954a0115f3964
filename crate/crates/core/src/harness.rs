//! Monte-Carlo detection times, sampling complexities and trade-off sweeps.
//!
//! A trial draws one sample path of length `N_max` and evaluates the test on
//! its prefixes at every grid size. One fitted tree (or one binned grid)
//! per prefix serves every regularization value of a sweep, so all settings
//! see the same data.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{grid_statistics, product_grid, BaselineKind, BinningMode, GridSpec};
use crate::dataset::Dataset;
use crate::decision::{FittedFamily, Schedule};
use crate::error::{Error, Result};
use crate::models::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeGrid {
    sizes: Vec<usize>,
}

impl SizeGrid {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes[0] < 1 {
            return Err(Error::InvalidArgument("size grid must be nonempty and positive".into()));
        }
        if !sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("size grid must be strictly increasing".into()));
        }
        Ok(Self { sizes })
    }

    /// `start · 10^{i/per_decade}` rounded, deduplicated, ending at `n_max`.
    pub fn log_spaced(start: usize, n_max: usize, per_decade: usize) -> Result<Self> {
        if start < 1 || n_max < start || per_decade < 1 {
            return Err(Error::InvalidArgument(format!(
                "bad grid: start={start}, n_max={n_max}, per_decade={per_decade}"
            )));
        }
        let mut sizes = Vec::new();
        for i in 0.. {
            let v = (start as f64 * 10f64.powf(i as f64 / per_decade as f64)).round() as usize;
            if v >= n_max {
                break;
            }
            if sizes.last() != Some(&v) {
                sizes.push(v);
            }
        }
        sizes.push(n_max);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn n_max(&self) -> usize {
        *self.sizes.last().expect("grid is nonempty")
    }
}

impl Default for SizeGrid {
    fn default() -> Self {
        Self::log_spaced(10, 100_000, 30).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    /// The decision that is wrong under this hypothesis.
    pub fn wrong_decision(self) -> bool {
        self == Self::H0
    }

    fn tag(self) -> u64 {
        match self {
            Self::H0 => 0,
            Self::H1 => 1,
        }
    }
}

/// SplitMix64 finalizer of `master` offset by `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under `hypothesis`.
pub fn trial_seed(master: u64, hypothesis: Hypothesis, trial: usize) -> u64 {
    derive_seed(derive_seed(master, hypothesis.tag()), trial as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub trial: usize,
    pub seed: u64,
    pub hypothesis: Hypothesis,
    /// Decision at each grid size.
    pub decisions: Vec<bool>,
    /// Largest grid size with the wrong decision, 0 if never wrong.
    pub t_tilde: usize,
    /// Wrong at the last grid size.
    pub censored: bool,
}

impl DetectionRecord {
    pub fn from_decisions(
        trial: usize,
        seed: u64,
        hypothesis: Hypothesis,
        grid: &SizeGrid,
        decisions: Vec<bool>,
    ) -> Result<Self> {
        if decisions.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: decisions.len(),
            });
        }
        let wrong = hypothesis.wrong_decision();
        let last_wrong = decisions.iter().rposition(|&d| d == wrong);
        Ok(Self {
            trial,
            seed,
            hypothesis,
            t_tilde: last_wrong.map_or(0, |i| grid.sizes()[i]),
            censored: last_wrong == Some(grid.len() - 1),
            decisions,
        })
    }

    pub fn packed_decisions(&self) -> String {
        self.decisions.iter().map(|&d| if d { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Value(usize),
    Censored,
}

impl Complexity {
    pub fn value(self) -> Option<usize> {
        match self {
            Self::Value(v) => Some(v),
            Self::Censored => None,
        }
    }
}

impl std::fmt::Display for Complexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Censored => f.write_str("censored"),
        }
    }
}

/// Smallest grid size `m` with `#{T̃ ≤ m} ≥ (1 − ε)·trials`; censored
/// records never count as detected.
pub fn sampling_complexity(records: &[DetectionRecord], grid: &SizeGrid, epsilon: f64) -> Result<Complexity> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no detection records".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let mut times: Vec<usize> = records.iter().filter(|r| !r.censored).map(|r| r.t_tilde).collect();
    times.sort_unstable();
    let need = (1.0 - epsilon) * records.len() as f64;
    for &m in grid.sizes() {
        let covered = times.partition_point(|&t| t <= m);
        // Small slack so 0.75·4 = 3 is met by 3 records.
        if covered as f64 >= need - 1e-9 {
            return Ok(Complexity::Value(m));
        }
    }
    Ok(Complexity::Censored)
}

/// Empirical distribution of `T̃` over `{0} ∪ grid ∪ {censored}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPmf {
    /// `(t_tilde, probability)`; the last grid size is only reached by
    /// censored records, which are reported separately.
    pub mass: Vec<(usize, f64)>,
    pub censored: f64,
}

pub fn detection_pmf(records: &[DetectionRecord], grid: &SizeGrid) -> DetectionPmf {
    let total = records.len().max(1) as f64;
    let mut support = vec![0];
    support.extend_from_slice(grid.sizes());
    let mass = support
        .iter()
        .map(|&t| {
            let c = records.iter().filter(|r| !r.censored && r.t_tilde == t).count();
            (t, c as f64 / total)
        })
        .collect();
    let censored = records.iter().filter(|r| r.censored).count() as f64 / total;
    DetectionPmf { mass, censored }
}

/// A test family evaluated on one dataset for several parameter values.
pub trait BatchTest: Sync {
    /// Parameter values (α or C), one decision each.
    fn parameters(&self) -> &[f64];

    fn decide_all(&self, data: &Dataset) -> Result<Vec<bool>>;

    fn method(&self) -> String;
}

/// The tree test at several regularization values.
#[derive(Debug, Clone, PartialEq)]
pub struct TspBatch {
    pub schedule: Schedule,
    pub alphas: Vec<f64>,
}

impl BatchTest for TspBatch {
    fn parameters(&self) -> &[f64] {
        &self.alphas
    }

    fn decide_all(&self, data: &Dataset) -> Result<Vec<bool>> {
        if data.n() < 2 {
            // Nothing can be split.
            return Ok(vec![false; self.alphas.len()]);
        }
        let fitted = FittedFamily::fit(data, &self.schedule)?;
        self.alphas
            .iter()
            .map(|&a| Ok(fitted.decide(a)?.decision))
            .collect()
    }

    fn method(&self) -> String {
        "tsp".into()
    }
}

/// A binning test at several threshold multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBatch {
    pub kind: BaselineKind,
    pub p_exp: f64,
    pub binning: BinningMode,
    pub cs: Vec<f64>,
}

impl BatchTest for BaselineBatch {
    fn parameters(&self) -> &[f64] {
        &self.cs
    }

    fn decide_all(&self, data: &Dataset) -> Result<Vec<bool>> {
        let spec = GridSpec {
            p_exp: self.p_exp,
            c: 0.0,
            binning: self.binning,
        };
        spec.validate()?;
        let grid = product_grid(data, spec.bins(data.n()), self.binning)?;
        let stats = grid_statistics(data, &grid)?;
        Ok(self.cs.iter().map(|&c| stats.decide(self.kind, c)).collect())
    }

    fn method(&self) -> String {
        self.kind.to_string()
    }
}

/// Detection records per parameter value: `result[j][t]` is trial `t` at
/// `parameters()[j]`. Trials run on the current rayon pool.
pub fn detection_times(
    model: &ModelConfig,
    test: &dyn BatchTest,
    grid: &SizeGrid,
    trials: usize,
    master_seed: u64,
    hypothesis: Hypothesis,
) -> Result<Vec<Vec<DetectionRecord>>> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let model = match hypothesis {
        Hypothesis::H0 => model.null_counterpart(),
        Hypothesis::H1 => *model,
    };
    model.validate()?;
    let per_trial: Vec<Vec<Vec<bool>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(master_seed, hypothesis, t);
            let path = model.sample(grid.n_max(), seed)?;
            grid.sizes()
                .iter()
                .map(|&n| test.decide_all(&path.prefix(n)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let settings = test.parameters().len();
    (0..settings)
        .map(|j| {
            per_trial
                .iter()
                .enumerate()
                .map(|(t, per_size)| {
                    let decisions = per_size.iter().map(|d| d[j]).collect();
                    let seed = trial_seed(master_seed, hypothesis, t);
                    DetectionRecord::from_decisions(t, seed, hypothesis, grid, decisions)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// α for the tree test, C for a baseline.
    pub parameter: f64,
    pub m0: Complexity,
    pub m1: Complexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub method: String,
    pub model: ModelConfig,
    pub epsilon: f64,
    pub trials: usize,
    pub n_max: usize,
    /// Sorted by parameter.
    pub points: Vec<TradeoffPoint>,
}

pub fn curve_from_records(
    test: &dyn BatchTest,
    model: &ModelConfig,
    grid: &SizeGrid,
    epsilon: f64,
    h0: &[Vec<DetectionRecord>],
    h1: &[Vec<DetectionRecord>],
) -> Result<TradeoffCurve> {
    let mut points = test
        .parameters()
        .iter()
        .zip(h0.iter().zip(h1))
        .map(|(&parameter, (r0, r1))| {
            Ok(TradeoffPoint {
                parameter,
                m0: sampling_complexity(r0, grid, epsilon)?,
                m1: sampling_complexity(r1, grid, epsilon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    Ok(TradeoffCurve {
        method: test.method(),
        model: *model,
        epsilon,
        trials: h0.first().map_or(0, Vec::len),
        n_max: grid.n_max(),
        points,
    })
}

/// `M0(ε)` under the model's null counterpart and `M1(ε)` under the model,
/// for every parameter of `test`.
pub fn tradeoff_sweep(
    model_h1: &ModelConfig,
    test: &dyn BatchTest,
    grid: &SizeGrid,
    epsilon: f64,
    trials: usize,
    master_seed: u64,
) -> Result<TradeoffCurve> {
    if test.parameters().is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one parameter".into()));
    }
    let h0 = detection_times(model_h1, test, grid, trials, master_seed, Hypothesis::H0)?;
    let h1 = detection_times(model_h1, test, grid, trials, master_seed, Hypothesis::H1)?;
    curve_from_records(test, model_h1, grid, epsilon, &h0, &h1)
}

/// `w = C^{p·d}`.
pub fn heuristic_w(d: usize, c: f64, p_exp: f64) -> Result<f64> {
    if d < 2 || !(c > 0.0 && c < 1.0) || !(p_exp > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "heuristic_w needs d >= 2, C in (0,1), p > 0; got d={d}, C={c}, p={p_exp}"
        )));
    }
    Ok(c.powf(p_exp * d as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEstimate {
    pub rejections: usize,
    pub trials: usize,
    pub fraction: f64,
    /// 95% Wilson score half-width.
    pub half_width: f64,
}

/// Rejection fraction at a fixed `n` under the model's null counterpart.
pub fn significance_estimate(
    model: &ModelConfig,
    schedule: &Schedule,
    n: usize,
    trials: usize,
    master_seed: u64,
) -> Result<SignificanceEstimate> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let null = model.null_counterpart();
    let decisions: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let data = null.sample(n, trial_seed(master_seed, Hypothesis::H0, t))?;
            Ok(FittedFamily::fit(&data, schedule)?.decide(schedule.alpha)?.decision)
        })
        .collect::<Result<_>>()?;
    let rejections = decisions.iter().filter(|&&d| d).count();
    let fraction = rejections as f64 / trials as f64;
    let z = 1.959_963_984_540_054;
    let t = trials as f64;
    let half_width = z / (1.0 + z * z / t) * (fraction * (1.0 - fraction) / t + z * z / (4.0 * t * t)).sqrt();
    Ok(SignificanceEstimate {
        rejections,
        trials,
        fraction,
        half_width,
    })
}

/// One row per record; `groups` pairs each parameter value with its records.
pub fn write_records_csv<W: Write>(groups: &[(f64, &[DetectionRecord])], mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Csv(e.to_string());
    writeln!(w, "parameter,trial,seed,hypothesis,decisions,t_tilde,censored").map_err(io)?;
    for (parameter, records) in groups {
        for r in records.iter() {
            writeln!(
                w,
                "{parameter},{},{},{:?},{},{},{}",
                r.trial,
                r.seed,
                r.hypothesis,
                r.packed_decisions(),
                r.t_tilde,
                u8::from(r.censored)
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_pmf_csv<W: Write>(h0: &DetectionPmf, h1: &DetectionPmf, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Csv(e.to_string());
    writeln!(w, "t_tilde,p_h0,p_h1").map_err(io)?;
    for ((t, p0), (_, p1)) in h0.mass.iter().zip(&h1.mass) {
        writeln!(w, "{t},{p0},{p1}").map_err(io)?;
    }
    writeln!(w, "censored,{},{}", h0.censored, h1.censored).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid4() -> SizeGrid {
        SizeGrid::new(vec![10, 20, 40, 80]).unwrap()
    }

    fn rec(decisions: &[u8], h: Hypothesis) -> DetectionRecord {
        let d = decisions.iter().map(|&b| b == 1).collect();
        DetectionRecord::from_decisions(0, 0, h, &grid4(), d).unwrap()
    }

    #[test]
    fn default_grid() {
        let g = SizeGrid::default();
        assert_eq!(g.sizes()[0], 10);
        assert_eq!(g.n_max(), 100_000);
        assert!(g.sizes().windows(2).all(|w| w[0] < w[1]));
        // 30 per decade over four decades, with early duplicates merged.
        assert!(g.len() > 100 && g.len() <= 121, "{}", g.len());
        assert!(SizeGrid::new(vec![3, 3]).is_err());
    }

    #[test]
    fn detection_time_definitions() {
        let r = rec(&[1, 1, 0, 0], Hypothesis::H0);
        assert_eq!((r.t_tilde, r.censored), (20, false));
        let r = rec(&[0, 0, 0, 0], Hypothesis::H0);
        assert_eq!((r.t_tilde, r.censored), (0, false));
        let r = rec(&[0, 0, 0, 1], Hypothesis::H0);
        assert_eq!((r.t_tilde, r.censored), (80, true));
        let r = rec(&[0, 1, 0, 1], Hypothesis::H1);
        assert_eq!((r.t_tilde, r.censored), (40, false));
        assert_eq!(r.packed_decisions(), "0101");
    }

    #[test]
    fn complexity_quantile() {
        let g = grid4();
        let recs: Vec<_> = [
            [1, 0, 0, 0],
            [1, 1, 0, 0],
            [0, 1, 0, 0],
            [1, 1, 1, 0],
        ]
        .iter()
        .map(|d| rec(d, Hypothesis::H0))
        .collect();
        assert_eq!(sampling_complexity(&recs, &g, 0.25).unwrap(), Complexity::Value(20));
        let zeros = vec![rec(&[0, 0, 0, 0], Hypothesis::H0); 5];
        assert_eq!(sampling_complexity(&zeros, &g, 0.05).unwrap(), Complexity::Value(10));
        let mut half = zeros.clone();
        half[0] = rec(&[0, 0, 0, 1], Hypothesis::H0);
        assert_eq!(sampling_complexity(&half, &g, 0.1).unwrap(), Complexity::Censored);
        assert_eq!(sampling_complexity(&half, &g, 0.3).unwrap(), Complexity::Value(10));
        assert!(sampling_complexity(&[], &g, 0.1).is_err());
    }

    #[test]
    fn pmf_normalizes() {
        let recs = vec![
            rec(&[1, 0, 0, 0], Hypothesis::H0),
            rec(&[0, 0, 0, 1], Hypothesis::H0),
            rec(&[0, 0, 0, 0], Hypothesis::H0),
        ];
        let pmf = detection_pmf(&recs, &grid4());
        let total: f64 = pmf.mass.iter().map(|m| m.1).sum::<f64>() + pmf.censored;
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(pmf.mass[0], (0, 1.0 / 3.0));
    }

    #[test]
    fn heuristic_w_values() {
        assert!((heuristic_w(2, 0.225, 0.5).unwrap() - 0.225).abs() < 1e-15);
        assert!((heuristic_w(4, 0.225, 0.5).unwrap() - 0.050_625).abs() < 1e-15);
        assert!((heuristic_w(2, 0.1, 0.5).unwrap() - 0.1).abs() < 1e-15);
        assert!(heuristic_w(1, 0.1, 0.5).is_err());
        assert!(heuristic_w(2, 1.5, 0.5).is_err());
    }

    #[test]
    fn seeds_differ() {
        let a = trial_seed(1, Hypothesis::H0, 0);
        assert_ne!(a, trial_seed(1, Hypothesis::H1, 0));
        assert_ne!(a, trial_seed(1, Hypothesis::H0, 1));
        assert_ne!(a, trial_seed(2, Hypothesis::H0, 0));
        assert_eq!(a, trial_seed(1, Hypothesis::H0, 0));
    }

    #[test]
    fn small_sweep_is_reproducible() {
        let grid = SizeGrid::log_spaced(10, 400, 5).unwrap();
        let model = ModelConfig::Gaussian { sigma: 0.7 };
        let tsp = TspBatch {
            schedule: Schedule::new(0.1, 0.001, 0.0).unwrap(),
            alphas: vec![1e-3, 0.0, 1e-4],
        };
        let a = tradeoff_sweep(&model, &tsp, &grid, 0.1, 6, 42).unwrap();
        let b = tradeoff_sweep(&model, &tsp, &grid, 0.1, 6, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.iter().map(|p| p.parameter).collect::<Vec<_>>(), vec![0.0, 1e-4, 1e-3]);
        let base = BaselineBatch {
            kind: BaselineKind::Loglik,
            p_exp: 0.2,
            binning: BinningMode::Quantile,
            cs: vec![0.5, 1.0],
        };
        let c = tradeoff_sweep(&model, &base, &grid, 0.1, 6, 42).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.method, "loglik");
    }

    #[test]
    fn huge_alpha_never_rejects() {
        let s = Schedule::new(0.1, 0.001, 1e9).unwrap();
        let est = significance_estimate(&ModelConfig::Gaussian { sigma: 0.5 }, &s, 500, 10, 3).unwrap();
        assert_eq!(est.rejections, 0);
        assert_eq!(est.fraction, 0.0);
        assert!(est.half_width > 0.0 && est.half_width < 0.5);
    }
}
