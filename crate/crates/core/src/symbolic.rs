//! Uniform K-level symbolization of numeric series.
//!
//! A [`Quantizer`] partitions the fitted value range `[lo, hi]` into `k`
//! equal-width bins labelled `A`, `B`, ... in ascending order. The label
//! index doubles as the ordinal weight of a symbol, so the distance between
//! two symbols is the absolute difference of their indices and the largest
//! possible distance is `k - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_LEVELS: usize = 2;
pub const MAX_LEVELS: usize = 26;

/// Level names for the five-symbol alphabet.
pub const FIVE_LEVEL_ALIASES: [&str; 5] = ["VL", "L", "M", "H", "VH"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    k: usize,
    lo: f64,
    hi: f64,
    labels: Vec<char>,
}

impl Quantizer {
    /// Fits the quantizer to the observed min/max of `values`.
    pub fn fit(values: &[f64], k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Fit("cannot fit on an empty series".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("non-finite value at position {pos}")));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Self::with_range(lo, hi, k)
    }

    /// Builds a quantizer over an explicit range.
    pub fn with_range(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if !(MIN_LEVELS..=MAX_LEVELS).contains(&k) {
            return Err(Error::Fit(format!(
                "k must lie in [{MIN_LEVELS}, {MAX_LEVELS}], got {k}"
            )));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Fit("range bounds must be finite".into()));
        }
        if lo > hi {
            return Err(Error::Fit(format!("lo {lo} exceeds hi {hi}")));
        }
        let labels = (0..k).map(|i| (b'A' + i as u8) as char).collect();
        Ok(Self { k, lo, hi, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    /// A flat fitting range; every value then maps to the middle level.
    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.k as f64
    }

    /// Largest symbol distance, `k - 1`.
    pub fn max_distance(&self) -> usize {
        self.k - 1
    }

    /// Bin edges `lo + i * width` for `i` in `0..=k`.
    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.k)
            .map(|i| {
                if i == self.k {
                    self.hi
                } else {
                    self.lo + i as f64 * w
                }
            })
            .collect()
    }

    pub fn label(&self, index: usize) -> Result<char> {
        self.labels.get(index).copied().ok_or_else(|| {
            Error::Domain(format!(
                "symbol index {index} outside alphabet of {}",
                self.k
            ))
        })
    }

    /// `VL`/`L`/`M`/`H`/`VH` names, only defined for five levels.
    pub fn alias(&self, index: usize) -> Option<&'static str> {
        if self.k == FIVE_LEVEL_ALIASES.len() {
            FIVE_LEVEL_ALIASES.get(index).copied()
        } else {
            None
        }
    }

    /// Maps a single value to its level. Out-of-range values clamp to the
    /// extreme levels; `hi` itself lands in the top level.
    pub fn level_of(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::Encode(format!("non-finite value {value}")));
        }
        if self.is_degenerate() {
            return Ok(self.k / 2);
        }
        let scaled = (value - self.lo) / (self.hi - self.lo) * self.k as f64;
        let index = scaled.floor();
        Ok(if index <= 0.0 {
            0
        } else {
            (index as usize).min(self.k - 1)
        })
    }

    pub fn encode(&self, values: &[f64]) -> Result<SymbolSequence> {
        let symbols = values
            .iter()
            .map(|&v| self.level_of(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolSequence { symbols, k: self.k })
    }

    /// Ordinal distance `|a - b|` between two symbols.
    pub fn distance(&self, a: usize, b: usize) -> Result<usize> {
        for idx in [a, b] {
            if idx >= self.k {
                return Err(Error::Domain(format!(
                    "symbol index {idx} outside alphabet of {}",
                    self.k
                )));
            }
        }
        Ok(a.abs_diff(b))
    }

    /// Renders the sequence as its label characters, e.g. `AABCCCDDEE`.
    pub fn pattern_string(&self, seq: &SymbolSequence) -> Result<String> {
        if seq.k != self.k {
            return Err(Error::Consistency(format!(
                "sequence encoded with k={} but quantizer has k={}",
                seq.k, self.k
            )));
        }
        seq.symbols.iter().map(|&i| self.label(i)).collect()
    }

    /// Inverse of [`Quantizer::pattern_string`].
    pub fn parse_pattern(&self, pattern: &str) -> Result<SymbolSequence> {
        let symbols = pattern
            .chars()
            .map(|c| {
                self.labels
                    .iter()
                    .position(|&l| l == c)
                    .ok_or_else(|| Error::Domain(format!("'{c}' is not a level label")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolSequence { symbols, k: self.k })
    }
}

/// Encoded symbol indices of a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    symbols: Vec<usize>,
    k: usize,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<usize>, k: usize) -> Result<Self> {
        if !(MIN_LEVELS..=MAX_LEVELS).contains(&k) {
            return Err(Error::Domain(format!(
                "k={k} outside [{MIN_LEVELS}, {MAX_LEVELS}]"
            )));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s >= k) {
            return Err(Error::Domain(format!("symbol index {bad} >= k={k}")));
        }
        Ok(Self { symbols, k })
    }

    /// Parses letters `A`, `B`, ... into indices.
    pub fn from_letters(letters: &str, k: usize) -> Result<Self> {
        let symbols = letters
            .chars()
            .map(|c| {
                if c.is_ascii_uppercase() {
                    Ok((c as u8 - b'A') as usize)
                } else {
                    Err(Error::Domain(format!(
                        "'{c}' is not an uppercase level label"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(symbols, k)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Signed level changes between consecutive symbols.
    pub fn transitions(&self) -> Result<TransitionSequence> {
        if self.symbols.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "transitions need at least 2 symbols, got {}",
                self.symbols.len()
            )));
        }
        let deltas = self
            .symbols
            .windows(2)
            .map(|w| w[1] as i32 - w[0] as i32)
            .collect();
        Ok(TransitionSequence {
            deltas,
            source_len: self.symbols.len(),
        })
    }
}

/// `deltas[t] = w(s[t+1]) - w(s[t])`; positive values are upward moves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSequence {
    deltas: Vec<i32>,
    source_len: usize,
}

impl TransitionSequence {
    /// Wraps raw deltas, as if they came from a sequence one longer.
    pub fn from_deltas(deltas: Vec<i32>) -> Self {
        let source_len = deltas.len() + 1;
        Self { deltas, source_len }
    }

    pub fn deltas(&self) -> &[i32] {
        &self.deltas
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(lo: f64, hi: f64, k: usize) -> Quantizer {
        Quantizer::with_range(lo, hi, k).unwrap()
    }

    #[test]
    fn fit_uses_observed_range() {
        let quant = Quantizer::fit(&[0.0, 10.0], 5).unwrap();
        assert_eq!((quant.lo(), quant.hi()), (0.0, 10.0));
        assert_eq!(quant.width(), 2.0);
        assert!(!quant.is_degenerate());
    }

    #[test]
    fn fit_constant_is_degenerate() {
        let quant = Quantizer::fit(&[3.0, 3.0, 3.0], 5).unwrap();
        assert!(quant.is_degenerate());
        assert_eq!((quant.lo(), quant.hi()), (3.0, 3.0));
    }

    #[test]
    fn fit_edges_over_minus5_to_25() {
        // hand-computed: -5 + i * 30 / 5
        let quant = Quantizer::fit(&[7.3, -5.0, 12.0, 25.0, 0.5], 5).unwrap();
        assert_eq!(quant.edges(), vec![-5.0, 1.0, 7.0, 13.0, 19.0, 25.0]);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(Quantizer::fit(&[], 5), Err(Error::Fit(_))));
        assert!(matches!(
            Quantizer::fit(&[1.0, f64::NAN], 5),
            Err(Error::Fit(_))
        ));
        assert!(matches!(
            Quantizer::fit(&[1.0, f64::INFINITY], 5),
            Err(Error::Fit(_))
        ));
        assert!(matches!(Quantizer::fit(&[1.0], 1), Err(Error::Fit(_))));
        assert!(matches!(Quantizer::fit(&[1.0], 27), Err(Error::Fit(_))));
    }

    #[test]
    fn encode_one_value_per_bin() {
        let quant = q(0.0, 10.0, 5);
        let seq = quant.encode(&[0.0, 2.5, 5.0, 7.5, 10.0]).unwrap();
        assert_eq!(seq.symbols(), &[0, 1, 2, 3, 4]);
        assert_eq!(quant.pattern_string(&seq).unwrap(), "ABCDE");
    }

    #[test]
    fn encode_degenerate_maps_to_middle() {
        let quant = q(3.0, 3.0, 5);
        let seq = quant.encode(&[-100.0, 3.0, 1e9]).unwrap();
        assert_eq!(seq.symbols(), &[2, 2, 2]);
        assert_eq!(quant.pattern_string(&seq).unwrap(), "CCC");
    }

    #[test]
    fn encode_clamps_out_of_range() {
        let quant = q(0.0, 10.0, 5);
        assert_eq!(quant.level_of(-3.0).unwrap(), 0);
        assert_eq!(quant.level_of(42.0).unwrap(), 4);
    }

    #[test]
    fn encode_rejects_non_finite() {
        let quant = q(0.0, 10.0, 5);
        assert!(matches!(
            quant.encode(&[1.0, f64::NAN]),
            Err(Error::Encode(_))
        ));
    }

    #[test]
    fn distance_examples() {
        let quant = q(0.0, 1.0, 5);
        assert_eq!(quant.distance(0, 4).unwrap(), 4);
        assert_eq!(quant.distance(2, 2).unwrap(), 0);
        assert_eq!(quant.distance(1, 3).unwrap(), 2);
        assert!(matches!(quant.distance(0, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_is_a_metric_on_small_alphabets() {
        for k in 2..=10 {
            let quant = q(0.0, 1.0, k);
            let d = |a, b| quant.distance(a, b).unwrap();
            for a in 0..k {
                assert_eq!(d(a, a), 0);
                for b in 0..k {
                    assert_eq!(d(a, b), d(b, a));
                    if a != b {
                        assert!(d(a, b) > 0);
                    }
                    for c in 0..k {
                        assert!(d(a, c) <= d(a, b) + d(b, c));
                    }
                }
            }
            assert_eq!(d(0, k - 1), quant.max_distance());
        }
    }

    #[test]
    fn transition_examples() {
        let t = |s: &str| {
            SymbolSequence::from_letters(s, 5)
                .unwrap()
                .transitions()
                .unwrap()
                .deltas()
                .to_vec()
        };
        assert_eq!(t("AABCC"), vec![0, 1, 1, 0]);
        assert_eq!(t("CCCC"), vec![0, 0, 0]);
        assert_eq!(t("AEAE"), vec![4, -4, 4]);
    }

    #[test]
    fn transitions_need_two_symbols() {
        let seq = SymbolSequence::from_letters("A", 5).unwrap();
        assert!(matches!(seq.transitions(), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pattern_examples() {
        let quant = q(0.0, 1.0, 5);
        let seq = SymbolSequence::new(vec![0, 0, 1, 2, 2, 2, 3, 3, 4, 4], 5).unwrap();
        assert_eq!(quant.pattern_string(&seq).unwrap(), "AABCCCDDEE");
        let empty = SymbolSequence::new(vec![], 5).unwrap();
        assert_eq!(quant.pattern_string(&empty).unwrap(), "");
        let single = SymbolSequence::new(vec![2], 5).unwrap();
        assert_eq!(quant.pattern_string(&single).unwrap(), "C");
    }

    #[test]
    fn aliases_only_for_five_levels() {
        assert_eq!(q(0.0, 1.0, 5).alias(0), Some("VL"));
        assert_eq!(q(0.0, 1.0, 5).alias(4), Some("VH"));
        assert_eq!(q(0.0, 1.0, 7).alias(0), None);
        assert_eq!(q(0.0, 1.0, 26).labels().last(), Some(&'Z'));
    }

    #[test]
    fn symbol_sequence_rejects_out_of_alphabet() {
        assert!(SymbolSequence::new(vec![0, 5], 5).is_err());
        assert!(SymbolSequence::from_letters("AF", 5).is_err());
    }
}
