//! Distribution-free confidence penalty for pruned trees of a given size,
//! and its union-bound form used as the pruning penalty.
//!
//! Values are in nats; the `alpha` multiplier is applied by the pruner.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub n: usize,
    pub b: f64,
    pub d: usize,
    pub delta: f64,
    /// Tree size (leaf count).
    pub k: usize,
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if self.n < 1 {
            return bad("penalty needs n >= 1".into());
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return bad(format!("penalty needs b in (0,1), got {}", self.b));
        }
        if self.d < 2 {
            return bad(format!("penalty needs d >= 2, got {}", self.d));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("penalty needs delta in (0,1), got {}", self.delta));
        }
        if self.k < 1 {
            return bad("penalty needs k >= 1".into());
        }
        Ok(())
    }
}

/// `ε_c = 24√2 / (b√n) · sqrt(ln(8/δ) + k[(d+1) ln 2 + d ln n])`.
pub fn epsilon_c(params: PenaltyParams) -> Result<f64> {
    params.validate()?;
    let PenaltyParams { n, b, d, delta, k } = params;
    let n = n as f64;
    let d = d as f64;
    let k = k as f64;
    let scale = 24.0 * std::f64::consts::SQRT_2 / (b * n.sqrt());
    let complexity = (8.0 / delta).ln() + k * ((d + 1.0) * std::f64::consts::LN_2 + d * n.ln());
    Ok(scale * complexity.sqrt())
}

/// `r_{b,δ}(k) = ε_c(n, b, d, δ·b, k)`, and exactly zero for the root-only
/// tree.
pub fn penalty_r(n: usize, b: f64, d: usize, delta: f64, k: usize) -> Result<f64> {
    let params = PenaltyParams { n, b, d, delta, k };
    params.validate()?;
    if k == 1 {
        return Ok(0.0);
    }
    epsilon_c(PenaltyParams {
        delta: delta * b,
        ..params
    })
}
