//! Synthetic scenarios, closed-form Gaussian mutual information, the oracle
//! likelihood-ratio statistic and the regret decomposition.
//!
//! Points are drawn one after another from a single ChaCha8 stream, so the
//! first `n` points of a size-`N` sample are exactly the size-`n` sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::infostat::{cell_measures, divergence_term, restricted_divergence};
use crate::partition::AxisCell;
use crate::quadrature::{bivariate_normal_rect, normal_interval};

/// Name of the generator behind every sample, recorded in run manifests.
pub const RNG_NAME: &str = "chacha8";

/// Within-component variance of the rotated mixture.
pub const MIXTURE_VARIANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// One bivariate normal pair with correlation `sigma`.
    Gaussian { sigma: f64 },
    /// `pairs` independent copies; `X = (X_1..)`, `Y = (Y_1..)` and only
    /// `X_i, Y_i` are correlated.
    GaussianMulti { sigma: f64, pairs: usize },
    /// Gaussian vector divided by a shared `sqrt(χ²_dof / dof)`.
    #[serde(alias = "student_t")]
    StudentTElliptical { sigma: f64, dof: f64 },
    /// Independent univariate t coordinates; the null for the elliptical t,
    /// whose uncorrelated version is still dependent.
    StudentTIndependent { dof: f64 },
    /// Four equally weighted components at `(±1, ±1)`, rotated by `theta`.
    RotatedMixture { theta: f64 },
}

impl ModelConfig {
    pub fn gaussian_for_mi(target_bits: f64, pairs: usize) -> Result<Self> {
        let sigma = sigma_for_target_mi(target_bits, pairs)?;
        Ok(if pairs == 1 {
            Self::Gaussian { sigma }
        } else {
            Self::GaussianMulti { sigma, pairs }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            Self::Gaussian { sigma } | Self::GaussianMulti { sigma, .. } | Self::StudentTElliptical { sigma, .. }
                if !(sigma.abs() < 1.0) =>
            {
                bad(format!("correlation must satisfy |sigma| < 1, got {sigma}"))
            }
            Self::GaussianMulti { pairs: 0, .. } => bad("gaussian_multi needs pairs >= 1".into()),
            Self::StudentTElliptical { dof, .. } | Self::StudentTIndependent { dof } if !(dof >= 1.0 && dof.is_finite()) => {
                bad(format!("degrees of freedom must be >= 1, got {dof}"))
            }
            Self::RotatedMixture { theta } if !(0.0..=std::f64::consts::FRAC_PI_4).contains(&theta) => {
                bad(format!("theta must lie in [0, pi/4], got {theta}"))
            }
            _ => Ok(()),
        }
    }

    pub fn pairs(&self) -> usize {
        match *self {
            Self::GaussianMulti { pairs, .. } => pairs,
            _ => 1,
        }
    }

    pub fn p(&self) -> usize {
        self.pairs()
    }

    pub fn q(&self) -> usize {
        self.pairs()
    }

    pub fn d(&self) -> usize {
        2 * self.pairs()
    }

    /// The same scenario with the dependence switched off.
    pub fn null_counterpart(&self) -> Self {
        match *self {
            Self::Gaussian { .. } => Self::Gaussian { sigma: 0.0 },
            Self::GaussianMulti { pairs, .. } => Self::GaussianMulti { sigma: 0.0, pairs },
            Self::StudentTElliptical { dof, .. } | Self::StudentTIndependent { dof } => {
                Self::StudentTIndependent { dof }
            }
            Self::RotatedMixture { .. } => Self::RotatedMixture { theta: 0.0 },
        }
    }

    /// Dependence strength: the correlation, or the rotation angle.
    pub fn strength(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } | Self::GaussianMulti { sigma, .. } | Self::StudentTElliptical { sigma, .. } => sigma,
            Self::StudentTIndependent { .. } => 0.0,
            Self::RotatedMixture { theta } => theta,
        }
    }

    /// Same scenario with another strength; the independent t has none.
    pub fn with_strength(&self, s: f64) -> Self {
        match *self {
            Self::Gaussian { .. } => Self::Gaussian { sigma: s },
            Self::GaussianMulti { pairs, .. } => Self::GaussianMulti { sigma: s, pairs },
            Self::StudentTElliptical { dof, .. } => Self::StudentTElliptical { sigma: s, dof },
            Self::StudentTIndependent { dof } => Self::StudentTIndependent { dof },
            Self::RotatedMixture { .. } => Self::RotatedMixture { theta: s },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::GaussianMulti { .. } => "gaussian_multi",
            Self::StudentTElliptical { .. } => "student_t_elliptical",
            Self::StudentTIndependent { .. } => "student_t_independent",
            Self::RotatedMixture { .. } => "rotated_mixture",
        }
    }

    /// Correlation of a Gaussian model.
    fn gaussian_sigma(&self) -> Result<f64> {
        match *self {
            Self::Gaussian { sigma } | Self::GaussianMulti { sigma, .. } => Ok(sigma),
            _ => Err(Error::UnsupportedModel(format!(
                "{} has no closed-form density ratio",
                self.kind_name()
            ))),
        }
    }

    /// True mutual information in nats, for Gaussian models.
    pub fn mi_nats(&self) -> Result<f64> {
        self.validate()?;
        let sigma = self.gaussian_sigma()?;
        Ok(-0.5 * self.pairs() as f64 * (-sigma * sigma).ln_1p())
    }

    /// Draws `n` points; columns are `X_1..X_p, Y_1..Y_q`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n < 1 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = self.pairs();
        let mut columns = vec![Vec::with_capacity(n); 2 * pairs];
        let mut point = vec![0.0; 2 * pairs];
        for _ in 0..n {
            self.draw(&mut rng, &mut point)?;
            for (col, &v) in columns.iter_mut().zip(&point) {
                col.push(v);
            }
        }
        Dataset::from_columns(columns, pairs, pairs)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        let pairs = out.len() / 2;
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        match *self {
            Self::Gaussian { sigma } | Self::GaussianMulti { sigma, .. } | Self::StudentTElliptical { sigma, .. } => {
                let s = (1.0 - sigma * sigma).sqrt();
                for i in 0..pairs {
                    let z1 = normal();
                    let z2 = normal();
                    out[i] = z1;
                    out[pairs + i] = sigma * z1 + s * z2;
                }
                if let Self::StudentTElliptical { dof, .. } = *self {
                    let w = chi_squared(dof)?.sample(rng);
                    let scale = (dof / w).sqrt();
                    out.iter_mut().for_each(|v| *v *= scale);
                }
            }
            Self::StudentTIndependent { dof } => {
                let chi = chi_squared(dof)?;
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * (dof / chi.sample(rng)).sqrt();
                }
            }
            Self::RotatedMixture { theta } => {
                let component = rng.random_range(0..4u8);
                let mx = if component & 1 == 0 { 1.0 } else { -1.0 };
                let my = if component & 2 == 0 { 1.0 } else { -1.0 };
                let sd = MIXTURE_VARIANCE.sqrt();
                let x: f64 = mx + sd * rng.sample::<f64, _>(StandardNormal);
                let y: f64 = my + sd * rng.sample::<f64, _>(StandardNormal);
                let (sin, cos) = theta.sin_cos();
                out[0] = x * cos - y * sin;
                out[1] = x * sin + y * cos;
            }
        }
        Ok(())
    }
}

fn chi_squared(dof: f64) -> Result<ChiSquared<f64>> {
    ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(format!("chi-squared({dof}): {e}")))
}

/// `pairs · (−½ log2(1 − σ²))`.
pub fn gaussian_mi(sigma: f64, pairs: usize) -> Result<f64> {
    if !(sigma.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|sigma| must be < 1, got {sigma}")));
    }
    if pairs < 1 {
        return Err(Error::InvalidArgument("pairs must be >= 1".into()));
    }
    Ok(-0.5 * pairs as f64 * (-sigma * sigma).ln_1p() / std::f64::consts::LN_2)
}

/// Inverse of [`gaussian_mi`] on `σ ≥ 0`.
pub fn sigma_for_target_mi(target_bits: f64, pairs: usize) -> Result<f64> {
    if !(target_bits >= 0.0 && target_bits.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target MI must be finite and >= 0, got {target_bits}"
        )));
    }
    if pairs < 1 {
        return Err(Error::InvalidArgument("pairs must be >= 1".into()));
    }
    let x = 2.0 * target_bits / pairs as f64 * std::f64::consts::LN_2;
    Ok((-(-x).exp_m1()).sqrt())
}

/// `ln dP/dQ*` of a standard bivariate normal pair with correlation `rho`.
fn pair_log_ratio(x: f64, y: f64, rho: f64) -> f64 {
    let one_minus = 1.0 - rho * rho;
    -0.5 * one_minus.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_minus)
}

/// Per-sample average of the true log density ratio, in nats.
pub fn oracle_statistic(data: &Dataset, model: &ModelConfig) -> Result<f64> {
    model.validate()?;
    let rho = model.gaussian_sigma()?;
    let pairs = model.pairs();
    if data.p() != pairs || data.q() != pairs {
        return Err(Error::DimensionMismatch {
            expected: 2 * pairs,
            got: data.d(),
        });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = (0..data.n())
        .map(|row| {
            (0..pairs)
                .map(|i| pair_log_ratio(data.value(row, i), data.value(row, pairs + i), rho))
                .sum::<f64>()
        })
        .sum();
    Ok(total / data.n() as f64)
}

/// Absolute tolerance of each rectangle probability.
pub const RECT_TOL: f64 = 1e-10;

/// True joint and product masses of a cell under a Gaussian model.
pub fn gaussian_cell_masses(cell: &AxisCell, rho: f64, pairs: usize) -> Option<(f64, f64)> {
    let b = cell.bounds();
    let mut joint = 1.0;
    let mut product = 1.0;
    for i in 0..pairs {
        let (x, y) = (b[i], b[pairs + i]);
        let px = normal_interval(x.0, x.1);
        let py = normal_interval(y.0, y.1);
        let full = |(lo, hi): (f64, f64)| lo == f64::NEG_INFINITY && hi == f64::INFINITY;
        // A cell unrestricted in one coordinate of the pair has P = Q there.
        let pj = if full(x) || full(y) {
            px * py
        } else {
            bivariate_normal_rect(x, y, rho, RECT_TOL)?
        };
        joint *= pj;
        product *= px * py;
    }
    Some((joint, product))
}

/// Splits `i_n − î` into oracle noise, approximation error and estimation
/// error. All values in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub oracle_statistic: f64,
    pub true_mi: f64,
    pub true_restricted: f64,
    pub empirical_restricted: f64,
    /// `i_n − I(X;Y)`.
    pub term_i: f64,
    /// `I(X;Y) − D_π(P‖Q*)`.
    pub term_ii: f64,
    /// `D_π(P‖Q*) − D_π(P̂‖Q̂*)`.
    pub term_iii: f64,
}

impl RegretReport {
    /// `term_i + term_ii + term_iii`, which should equal `i_n − î`.
    pub fn total(&self) -> f64 {
        self.term_i + self.term_ii + self.term_iii
    }
}

pub fn regret_report(data: &Dataset, cells: &[AxisCell], model: &ModelConfig) -> Result<RegretReport> {
    let i_n = oracle_statistic(data, model)?;
    let mi = model.mi_nats()?;
    let rho = model.gaussian_sigma()?;
    let empirical = restricted_divergence(&cell_measures(data, cells)?)?;
    let mut true_restricted = 0.0;
    for (idx, cell) in cells.iter().enumerate() {
        let (joint, product) =
            gaussian_cell_masses(cell, rho, model.pairs()).ok_or(Error::Integration { cell: idx })?;
        true_restricted += divergence_term(joint, product);
    }
    Ok(RegretReport {
        oracle_statistic: i_n,
        true_mi: mi,
        true_restricted,
        empirical_restricted: empirical,
        term_i: i_n - mi,
        term_ii: mi - true_restricted,
        term_iii: true_restricted - empirical,
    })
}
