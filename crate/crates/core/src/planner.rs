//! Choosing a segment count under the drift/loss tradeoff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber_model::drift_segmented;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("invalid {field}: {reason}")]
    InvalidConstraint { field: &'static str, reason: String },
    #[error("segment lengths sum to {sum} m, expected {expected} m")]
    LengthMismatch { sum: f64, expected: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConstraints {
    /// Per arm, m.
    pub total_length: f64,
    pub max_segments: usize,
    /// dB per connector; a split into m parts has m − 1 connectors.
    pub connector_loss: f64,
    /// dB/km.
    pub attenuation: f64,
    /// dB.
    pub loss_budget: f64,
    /// s.
    pub coherence_time: f64,
    /// s/(m·°C).
    pub b: f64,
    /// °C.
    pub delta_t: f64,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
}

fn default_safety() -> f64 {
    1.5
}

impl PlanConstraints {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let positive = [
            ("total_length", self.total_length),
            ("loss_budget", self.loss_budget),
            ("coherence_time", self.coherence_time),
            ("b", self.b),
            ("delta_t", self.delta_t),
            ("safety_factor", self.safety_factor),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlannerError::InvalidConstraint { field, reason: format!("{v} must be > 0") });
            }
        }
        for (field, v) in [("connector_loss", self.connector_loss), ("attenuation", self.attenuation)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PlannerError::InvalidConstraint { field, reason: format!("{v} must be ≥ 0") });
            }
        }
        if self.max_segments == 0 {
            return Err(PlannerError::InvalidConstraint { field: "max_segments", reason: "must be ≥ 1".into() });
        }
        Ok(())
    }

    pub fn drift_limit(&self) -> f64 {
        self.coherence_time / self.safety_factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEvaluation {
    pub drift: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub m: usize,
    pub drift: f64,
    pub loss: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    /// Equal split for the chosen m, or the single fiber when infeasible.
    pub lengths: Vec<f64>,
    pub drift: f64,
    pub loss: f64,
    pub feasible: bool,
    /// Every m from 1 to max_segments.
    pub table: Vec<PlanRow>,
}

/// Drift by the segmented formula and loss with m − 1 connectors.
pub fn evaluate_plan(lengths: &[f64], c: &PlanConstraints) -> Result<PlanEvaluation, PlannerError> {
    c.validate()?;
    let sum: f64 = lengths.iter().sum();
    if (sum - c.total_length).abs() > 1.0 {
        return Err(PlannerError::LengthMismatch { sum, expected: c.total_length });
    }
    let drift = drift_segmented(c.b, lengths, c.delta_t)
        .map_err(|e| PlannerError::InvalidConstraint { field: "lengths", reason: e.to_string() })?;
    let loss = c.attenuation * sum / 1000.0 + c.connector_loss * (lengths.len() - 1) as f64;
    Ok(PlanEvaluation { drift, loss })
}

/// Smallest m whose equal split meets both the drift limit and the loss budget.
pub fn plan_segments(c: &PlanConstraints) -> Result<SegmentPlan, PlannerError> {
    c.validate()?;
    let mut table = Vec::with_capacity(c.max_segments);
    for m in 1..=c.max_segments {
        let lengths = vec![c.total_length / m as f64; m];
        let e = evaluate_plan(&lengths, c)?;
        let feasible = e.drift <= c.drift_limit() && e.loss <= c.loss_budget;
        table.push(PlanRow { m, drift: e.drift, loss: e.loss, feasible });
    }
    let chosen = table.iter().find(|r| r.feasible).unwrap_or(&table[0]).clone();
    Ok(SegmentPlan {
        lengths: vec![c.total_length / chosen.m as f64; chosen.m],
        drift: chosen.drift,
        loss: chosen.loss,
        feasible: chosen.feasible,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PlanConstraints {
        PlanConstraints {
            total_length: 10_000.0,
            max_segments: 10,
            connector_loss: 0.3,
            attenuation: 0.2,
            loss_budget: 6.0,
            coherence_time: 3.25e-12,
            b: 5.03e-14,
            delta_t: 0.006,
            safety_factor: 1.5,
        }
    }

    #[test]
    fn single_fiber_marginal_with_unit_safety() {
        let p = plan_segments(&PlanConstraints { safety_factor: 1.0, ..reference() }).unwrap();
        assert_eq!(p.lengths.len(), 1);
        assert!((p.drift - 3.018e-12).abs() < 1e-15);
    }

    #[test]
    fn budget_below_bare_fiber_is_infeasible() {
        let p = plan_segments(&PlanConstraints { loss_budget: 1.9, ..reference() }).unwrap();
        assert!(!p.feasible);
        assert!(p.table.iter().all(|r| !r.feasible));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate_plan(&[5000.0, 4000.0], &reference()), Err(PlannerError::LengthMismatch { .. })));
    }
}
