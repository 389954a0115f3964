//! Parameter schedules, the mutual-information estimate and the thresholded
//! independence decision.
//!
//! The statistic is the restricted divergence of the regularized pruned
//! partition, in nats. The decision rejects independence when it reaches the
//! threshold `a_n`, also read in nats.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::infostat::{nats_to_base, NodeMeasures};
use crate::partition::{grow_full_tree, TspTree};
use crate::pruner::{embedded_family_from_measures, select_regularized, EmbeddedFamily, LeafSet};

/// Largest admissible `b_n`; larger values are clamped here.
pub const B_MAX: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeltaRule {
    /// `δ_n = exp(−n^{1/3})`.
    ExpCubeRoot,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `a_n = scale / n`.
    InverseN { scale: f64 },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub w: f64,
    pub l: f64,
    pub alpha: f64,
    pub delta_rule: DeltaRule,
    pub a_rule: ThresholdRule,
    /// Logarithm base of the reported estimate.
    pub report_base: f64,
}

/// Concrete values of the schedule at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValues {
    pub b: f64,
    pub delta: f64,
    pub a: f64,
}

impl Schedule {
    /// Default rules, report in bits.
    pub fn new(w: f64, l: f64, alpha: f64) -> Result<Self> {
        let s = Self {
            w,
            l,
            alpha,
            delta_rule: DeltaRule::ExpCubeRoot,
            a_rule: ThresholdRule::InverseN { scale: 0.5 },
            report_base: 2.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.w > 0.0 && self.w.is_finite()) {
            return bad(format!("w must be positive, got {}", self.w));
        }
        if !(self.l > 0.0 && self.l < 1.0 / 3.0) {
            return bad(format!("l must lie in (0, 1/3), got {}", self.l));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if let DeltaRule::Fixed { value } = self.delta_rule {
            if !(value > 0.0 && value < 1.0) {
                return bad(format!("fixed delta must lie in (0,1), got {value}"));
            }
        }
        match self.a_rule {
            ThresholdRule::InverseN { scale: v } | ThresholdRule::Fixed { value: v } => {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("threshold parameter must be positive, got {v}"));
                }
            }
        }
        if !(self.report_base > 1.0 && self.report_base.is_finite()) {
            return bad(format!("report base must exceed 1, got {}", self.report_base));
        }
        Ok(())
    }
}

pub fn schedule_at(s: &Schedule, n: usize) -> Result<ScheduleValues> {
    s.validate()?;
    if n < 1 {
        return Err(Error::InvalidArgument("schedule needs n >= 1".into()));
    }
    let nf = n as f64;
    let raw = s.w * nf.powf(-s.l);
    let b = if raw >= B_MAX {
        log::warn!("b_n = {raw} at n = {n} clamped to {B_MAX}");
        B_MAX
    } else {
        raw
    };
    let delta = match s.delta_rule {
        // Underflows to 0 past n ≈ 3.7e8; keep it strictly positive.
        DeltaRule::ExpCubeRoot => (-nf.cbrt()).exp().max(f64::MIN_POSITIVE),
        DeltaRule::Fixed { value } => value,
    };
    let a = match s.a_rule {
        ThresholdRule::InverseN { scale } => scale / nf,
        ThresholdRule::Fixed { value } => value,
    };
    Ok(ScheduleValues { b, delta, a })
}

/// Grown tree and embedded family at one sample size; every α can be
/// evaluated from it without regrowing.
#[derive(Debug, Clone)]
pub struct FittedFamily {
    pub n: usize,
    pub values: ScheduleValues,
    pub tree: TspTree,
    pub family: EmbeddedFamily,
}

impl FittedFamily {
    pub fn fit(data: &Dataset, s: &Schedule) -> Result<Self> {
        if data.n() < 2 {
            return Err(Error::InvalidDataset(format!(
                "the test needs at least 2 samples, got {}",
                data.n()
            )));
        }
        let values = schedule_at(s, data.n())?;
        let tree = grow_full_tree(data, values.b)?;
        let measures = NodeMeasures::new(data, &tree);
        let family = embedded_family_from_measures(&tree, &measures);
        Ok(Self {
            n: data.n(),
            values,
            tree,
            family,
        })
    }

    /// Selected leaf set and its statistic in nats.
    pub fn select(&self, alpha: f64) -> Result<LeafSet> {
        let v = self.values;
        Ok(select_regularized(&self.family, self.n, v.b, v.delta, alpha)?.leaf_set)
    }

    pub fn decide(&self, alpha: f64) -> Result<TestDecision> {
        let leaf_set = self.select(alpha)?;
        Ok(TestDecision::from_statistic(
            leaf_set.divergence,
            leaf_set.len(),
            self.values,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    /// In the schedule's report base.
    pub mi: f64,
    pub statistic_nats: f64,
    pub leaf_set: LeafSet,
    pub values: ScheduleValues,
}

pub fn estimate_mi(data: &Dataset, s: &Schedule) -> Result<MiEstimate> {
    let fitted = FittedFamily::fit(data, s)?;
    let leaf_set = fitted.select(s.alpha)?;
    // Guard against -0.0 and rounding just below zero.
    let nats = leaf_set.divergence.max(0.0);
    Ok(MiEstimate {
        mi: nats_to_base(nats, s.report_base),
        statistic_nats: nats,
        leaf_set,
        values: fitted.values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    /// `true` rejects independence.
    pub decision: bool,
    pub statistic_nats: f64,
    pub threshold: f64,
    pub leaf_count: usize,
    pub b_n: f64,
    pub delta_n: f64,
}

impl TestDecision {
    fn from_statistic(statistic: f64, leaf_count: usize, v: ScheduleValues) -> Self {
        // A single cell carries no evidence whatever the threshold.
        let statistic = if leaf_count == 1 { 0.0 } else { statistic.max(0.0) };
        Self {
            decision: leaf_count > 1 && statistic >= v.a,
            statistic_nats: statistic,
            threshold: v.a,
            leaf_count,
            b_n: v.b,
            delta_n: v.delta,
        }
    }
}

pub fn decide_independence(data: &Dataset, s: &Schedule) -> Result<TestDecision> {
    FittedFamily::fit(data, s)?.decide(s.alpha)
}

/// Serialized form of an estimate or decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub w: f64,
    pub l: f64,
    pub alpha: f64,
    pub b_n: f64,
    pub delta_n: f64,
    pub a_n: f64,
    pub statistic_nats: f64,
    pub mi_reported: f64,
    pub leaf_count: usize,
    pub decision: u8,
}

impl DecisionRecord {
    pub fn new(data: &Dataset, s: &Schedule, d: &TestDecision) -> Self {
        Self {
            n: data.n(),
            p: data.p(),
            q: data.q(),
            w: s.w,
            l: s.l,
            alpha: s.alpha,
            b_n: d.b_n,
            delta_n: d.delta_n,
            a_n: d.threshold,
            statistic_nats: d.statistic_nats,
            mi_reported: nats_to_base(d.statistic_nats, s.report_base),
            leaf_count: d.leaf_count,
            decision: u8::from(d.decision),
        }
    }
}
