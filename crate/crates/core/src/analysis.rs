//! Per-window symbolic analysis: encode, transitions, period, attention.

use serde::Serialize;

use crate::attention::{score, AttentionConfig, AttentionWeights};
use crate::error::Result;
use crate::periodicity::{detect_period, PeriodicityResult};
use crate::symbolic::{Quantizer, SymbolSequence, TransitionSequence};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAnalysis {
    pub pattern: String,
    pub symbols: SymbolSequence,
    pub transitions: TransitionSequence,
    pub periodicity: PeriodicityResult,
    pub attention: AttentionWeights,
    /// Attention-weighted value summary; diagnostic only.
    pub summary: f64,
}

impl WindowAnalysis {
    /// Runs the full symbolic pipeline over `values` (at least two points).
    pub fn run(values: &[f64], quantizer: &Quantizer, cfg: &AttentionConfig) -> Result<Self> {
        let symbols = quantizer.encode(values)?;
        let pattern = quantizer.pattern_string(&symbols)?;
        let transitions = symbols.transitions()?;
        let periodicity = detect_period(&transitions, cfg.tolerance)?;
        let attention = score(&symbols, &transitions, &periodicity, cfg)?;
        let summary = attention.weighted_summary(values)?;
        Ok(Self {
            pattern,
            symbols,
            transitions,
            periodicity,
            attention,
            summary,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_window() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let q = Quantizer::fit(&values, 5).unwrap();
        let a = WindowAnalysis::run(&values, &q, &AttentionConfig::default()).unwrap();
        assert_eq!(a.pattern, "AABBCCDDEE");
        assert_eq!(a.transitions.deltas(), &[0, 1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(a.periodicity.period(), Some(2));
        let total: f64 = a.attention.alphas().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_window_is_uniform() {
        let values = [4.0; 6];
        let q = Quantizer::fit(&values, 5).unwrap();
        let a = WindowAnalysis::run(&values, &q, &AttentionConfig::default()).unwrap();
        assert_eq!(a.pattern, "CCCCCC");
        assert!(a.attention.uniform_fallback());
        assert!((a.summary - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_rejected() {
        let q = Quantizer::fit(&[1.0], 5).unwrap();
        assert!(WindowAnalysis::run(&[1.0], &q, &AttentionConfig::default()).is_err());
    }
}
