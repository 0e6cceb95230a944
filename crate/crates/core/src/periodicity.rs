//! Minimal-period search over transition sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::TransitionSequence;

/// Outcome of [`detect_period`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityResult {
    period: Option<usize>,
    tolerance: f64,
    consistent: Vec<bool>,
}

impl PeriodicityResult {
    /// Builds a result directly, e.g. to score against a known period.
    pub fn new(period: Option<usize>, tolerance: f64, consistent: Vec<bool>) -> Result<Self> {
        check_tolerance(tolerance)?;
        if period == Some(0) {
            return Err(Error::Domain("period must be positive".into()));
        }
        if period.is_none() && consistent.iter().any(|&c| c) {
            return Err(Error::Consistency(
                "positions cannot be period-consistent without a period".into(),
            ));
        }
        Ok(Self {
            period,
            tolerance,
            consistent,
        })
    }

    /// No period over `len` transitions.
    pub fn none(len: usize, tolerance: f64) -> Self {
        Self {
            period: None,
            tolerance,
            consistent: vec![false; len],
        }
    }

    pub fn period(&self) -> Option<usize> {
        self.period
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn consistent(&self) -> &[bool] {
        &self.consistent
    }

    pub fn len(&self) -> usize {
        self.consistent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consistent.is_empty()
    }

    /// Multiplicative weight `1 + bonus` at period-consistent positions, `1` elsewhere.
    pub fn periodic_weight(&self, t: usize, bonus: f64) -> Result<f64> {
        if !(bonus.is_finite() && bonus >= 0.0) {
            return Err(Error::Domain(format!(
                "periodic bonus must be >= 0, got {bonus}"
            )));
        }
        let consistent = *self.consistent.get(t).ok_or_else(|| {
            Error::Domain(format!(
                "position {t} outside {} transitions",
                self.consistent.len()
            ))
        })?;
        Ok(if self.period.is_some() && consistent {
            1.0 + bonus
        } else {
            1.0
        })
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if (0.0..1.0).contains(&tolerance) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mismatch tolerance must lie in [0, 1), got {tolerance}"
        )))
    }
}

/// Finds the smallest `T` in `[1, M/2]` whose repetition explains the whole
/// delta sequence, allowing at most a `tolerance` fraction of positions
/// where `deltas[t] != deltas[t % T]`.
pub fn detect_period(
    transitions: &TransitionSequence,
    tolerance: f64,
) -> Result<PeriodicityResult> {
    check_tolerance(tolerance)?;
    let deltas = transitions.deltas();
    let m = deltas.len();
    if m < 2 {
        return Ok(PeriodicityResult::none(m, tolerance));
    }
    let allowed = tolerance * m as f64;
    for period in 1..=m / 2 {
        let mismatches = (period..m)
            .filter(|&t| deltas[t] != deltas[t % period])
            .count();
        if mismatches as f64 <= allowed {
            let consistent = (0..m).map(|t| deltas[t] == deltas[t % period]).collect();
            return Ok(PeriodicityResult {
                period: Some(period),
                tolerance,
                consistent,
            });
        }
    }
    Ok(PeriodicityResult::none(m, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn period_of(deltas: &[i32]) -> Option<usize> {
        detect_period(&TransitionSequence::from_deltas(deltas.to_vec()), 0.0)
            .unwrap()
            .period()
    }

    #[test]
    fn alternating_has_period_two() {
        assert_eq!(period_of(&[1, -1, 1, -1, 1, -1]), Some(2));
    }

    #[test]
    fn constant_has_period_one() {
        assert_eq!(period_of(&[0, 0, 0, 0]), Some(1));
    }

    #[test]
    fn partial_final_block_is_allowed() {
        assert_eq!(period_of(&[1, 2, -3, 1, 2, -3, 1, 2]), Some(3));
    }

    #[test]
    fn broken_repetition_has_no_period() {
        assert_eq!(period_of(&[1, -1, 1, -1, 2, -1]), None);
    }

    #[test]
    fn short_sequences_report_no_period() {
        let res = detect_period(&TransitionSequence::from_deltas(vec![3]), 0.0).unwrap();
        assert_eq!(res.period(), None);
        assert_eq!(res.consistent(), &[false]);
        let res = detect_period(&TransitionSequence::from_deltas(vec![]), 0.0).unwrap();
        assert!(res.is_empty());
    }

    #[test]
    fn tolerance_admits_one_mismatch() {
        let deltas = TransitionSequence::from_deltas(vec![1, -1, 1, -1, 2, -1, 1, -1, 1, -1]);
        assert_eq!(detect_period(&deltas, 0.0).unwrap().period(), None);
        let res = detect_period(&deltas, 0.1).unwrap();
        assert_eq!(res.period(), Some(2));
        assert_eq!(res.consistent().iter().filter(|&&c| !c).count(), 1);
        assert!(!res.consistent()[4]);
    }

    #[test]
    fn tolerance_out_of_range_is_rejected() {
        let deltas = TransitionSequence::from_deltas(vec![0, 0]);
        assert!(matches!(detect_period(&deltas, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            detect_period(&deltas, -0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exact_period_marks_every_position_consistent() {
        let res = detect_period(
            &TransitionSequence::from_deltas(vec![2, 0, -2, 2, 0, -2]),
            0.0,
        )
        .unwrap();
        assert_eq!(res.period(), Some(3));
        assert!(res.consistent().iter().all(|&c| c));
    }

    #[test]
    fn periodic_weight_rules() {
        let none = PeriodicityResult::none(3, 0.0);
        assert_eq!(none.periodic_weight(1, 0.5).unwrap(), 1.0);

        let periodic = PeriodicityResult::new(Some(2), 0.2, vec![true, false, true]).unwrap();
        assert_eq!(periodic.periodic_weight(0, 0.5).unwrap(), 1.5);
        assert_eq!(periodic.periodic_weight(1, 0.5).unwrap(), 1.0);
        assert_eq!(periodic.periodic_weight(2, 0.0).unwrap(), 1.0);
        assert!(matches!(
            periodic.periodic_weight(3, 0.5),
            Err(Error::Domain(_))
        ));
        assert!(periodic.periodic_weight(0, -1.0).is_err());
    }

    #[test]
    fn constructor_validates() {
        assert!(PeriodicityResult::new(Some(0), 0.0, vec![true]).is_err());
        assert!(PeriodicityResult::new(None, 0.0, vec![true]).is_err());
        assert!(PeriodicityResult::new(Some(1), 1.5, vec![true]).is_err());
    }
}
