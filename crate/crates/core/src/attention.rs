//! Transition attention scores.
//!
//! Each transition `t` receives the raw score
//!
//! ```text
//! a_t = (1 - d(s_t, s_{t-1}) / D) * |delta_t| * p_t
//! ```
//!
//! where `D = k - 1` and `p_t` is the periodic weight. The first transition
//! has no predecessor symbol pair and uses a damping factor of 1. Transitions
//! moving in the same direction as the window's overall trend (sign of last
//! symbol minus first symbol) are scaled by `1 + directional_bonus`. Scores
//! are then normalized to sum to one; an all-zero score vector becomes
//! uniform.
//!
//! The weights are an internal descriptor. They are never rendered into
//! prompts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::periodicity::PeriodicityResult;
use crate::symbolic::{SymbolSequence, TransitionSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub periodic_bonus: f64,
    pub directional_bonus: f64,
    pub tolerance: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            periodic_bonus: 0.5,
            directional_bonus: 0.2,
            tolerance: 0.0,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        non_negative("periodic_bonus", self.periodic_bonus)?;
        non_negative("directional_bonus", self.directional_bonus)?;
        if !(0.0..1.0).contains(&self.tolerance) {
            return Err(Error::Config(format!(
                "tolerance must lie in [0, 1), got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Per-position factors that produced a raw score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreFactors {
    pub damping: f64,
    pub magnitude: f64,
    pub periodic: f64,
    pub directional: f64,
}

impl ScoreFactors {
    pub fn raw(&self) -> f64 {
        self.damping * self.magnitude * self.periodic * self.directional
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    alphas: Vec<f64>,
    trend_sign: i8,
    factors: Vec<ScoreFactors>,
    uniform_fallback: bool,
}

impl AttentionWeights {
    /// Normalized weights, one per transition.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `-1`, `0` or `+1`.
    pub fn trend_sign(&self) -> i8 {
        self.trend_sign
    }

    pub fn factors(&self) -> &[ScoreFactors] {
        &self.factors
    }

    /// True when every raw score was zero and the uniform vector was used.
    pub fn uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Builds weights from explicit alphas (diagnostics and tests).
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Domain(
                "alphas must be finite and non-negative".into(),
            ));
        }
        let factors = alphas
            .iter()
            .map(|&a| ScoreFactors {
                damping: 1.0,
                magnitude: a,
                periodic: 1.0,
                directional: 1.0,
            })
            .collect();
        Ok(Self {
            alphas,
            trend_sign: 0,
            factors,
            uniform_fallback: false,
        })
    }

    /// `sum_t alpha_t * values[t + 1]`: each transition weights the value it lands on.
    pub fn weighted_summary(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.alphas.len() + 1 {
            return Err(Error::Consistency(format!(
                "{} weights need {} values, got {}",
                self.alphas.len(),
                self.alphas.len() + 1,
                values.len()
            )));
        }
        Ok(self
            .alphas
            .iter()
            .zip(&values[1..])
            .map(|(a, v)| a * v)
            .sum())
    }
}

pub fn score(
    seq: &SymbolSequence,
    transitions: &TransitionSequence,
    periodicity: &PeriodicityResult,
    cfg: &AttentionConfig,
) -> Result<AttentionWeights> {
    cfg.validate()?;
    let symbols = seq.symbols();
    if symbols.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "attention needs at least 2 symbols, got {}",
            symbols.len()
        )));
    }
    let deltas = transitions.deltas();
    let m = deltas.len();
    if m != symbols.len() - 1 {
        return Err(Error::Consistency(format!(
            "{} symbols imply {} transitions, got {m}",
            symbols.len(),
            symbols.len() - 1
        )));
    }
    if periodicity.len() != m {
        return Err(Error::Consistency(format!(
            "periodicity covers {} positions, expected {m}",
            periodicity.len()
        )));
    }
    let max_distance = (seq.k() - 1) as f64;
    let trend_sign = (symbols[symbols.len() - 1] as i64 - symbols[0] as i64).signum() as i8;

    let mut factors = Vec::with_capacity(m);
    for (t, &delta) in deltas.iter().enumerate() {
        let damping = if t == 0 {
            1.0
        } else {
            1.0 - symbols[t].abs_diff(symbols[t - 1]) as f64 / max_distance
        };
        let directional = if trend_sign != 0 && delta.signum() as i8 == trend_sign {
            1.0 + cfg.directional_bonus
        } else {
            1.0
        };
        factors.push(ScoreFactors {
            damping,
            magnitude: delta.unsigned_abs() as f64,
            periodic: periodicity.periodic_weight(t, cfg.periodic_bonus)?,
            directional,
        });
    }

    let raw: Vec<f64> = factors.iter().map(ScoreFactors::raw).collect();
    let total: f64 = raw.iter().sum();
    let (alphas, uniform_fallback) = if total > 0.0 {
        (raw.iter().map(|r| r / total).collect(), false)
    } else {
        (vec![1.0 / m as f64; m], true)
    };

    Ok(AttentionWeights {
        alphas,
        trend_sign,
        factors,
        uniform_fallback,
    })
}
