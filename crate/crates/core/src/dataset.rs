//! CSV ingestion, hourly resampling, ordered splits, normalization and
//! sliding forecast windows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_PER_HOUR: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
    unit: String,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>, unit: impl Into<String>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Consistency(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Consistency(format!(
                "timestamps not strictly increasing at position {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Consistency(format!(
                "non-finite value at position {i}"
            )));
        }
        Ok(Self {
            timestamps,
            values,
            unit: unit.into(),
        })
    }

    /// Evenly spaced series starting at `start` with `step` seconds between points.
    pub fn regular(
        start: i64,
        step: i64,
        values: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self> {
        if step <= 0 {
            return Err(Error::Consistency("step must be positive".into()));
        }
        let timestamps = (0..values.len() as i64).map(|i| start + i * step).collect();
        Self::new(timestamps, values, unit)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
            unit: self.unit.clone(),
        }
    }

    /// Joins contiguous pieces back together.
    pub fn concat(parts: &[&TimeSeries]) -> Result<TimeSeries> {
        let unit = parts.first().map(|p| p.unit.clone()).unwrap_or_default();
        let timestamps = parts
            .iter()
            .flat_map(|p| p.timestamps.iter().copied())
            .collect();
        let values = parts
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect();
        TimeSeries::new(timestamps, values, unit)
    }
}

/// Timestamp column encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimestampFormat {
    /// Integer or fractional seconds since the Unix epoch.
    Epoch,
    /// A chrono `strftime` pattern; date-only patterns resolve to midnight.
    Pattern(String),
}

impl TimestampFormat {
    pub fn parse(spec: &str) -> Self {
        match spec {
            "epoch" | "unix" => TimestampFormat::Epoch,
            other => TimestampFormat::Pattern(other.to_string()),
        }
    }

    fn to_epoch(&self, raw: &str) -> Option<i64> {
        let raw = raw.trim();
        match self {
            TimestampFormat::Epoch => raw.parse::<i64>().ok().or_else(|| {
                raw.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(|f| f.floor() as i64)
            }),
            TimestampFormat::Pattern(fmt) => NaiveDateTime::parse_from_str(raw, fmt)
                .ok()
                .or_else(|| {
                    NaiveDate::parse_from_str(raw, fmt)
                        .ok()
                        .and_then(|d| d.and_hms_opt(0, 0, 0))
                })
                .map(|dt| dt.and_utc().timestamp()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub timestamp_column: String,
    pub value_column: String,
    pub timestamp_format: TimestampFormat,
    pub delimiter: u8,
    pub unit: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
            timestamp_format: TimestampFormat::Pattern(DEFAULT_TIMESTAMP_FORMAT.into()),
            delimiter: b',',
            unit: String::new(),
        }
    }
}

pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub series: TimeSeries,
    /// Rows whose timestamp or value could not be parsed.
    pub dropped: usize,
    /// Rows discarded because an earlier row had the same timestamp.
    pub duplicates: usize,
}

/// Reads a single value column from a headed CSV file. Output is sorted by
/// timestamp; the first row wins on duplicate timestamps.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LoadedSeries> {
    let path = path.as_ref();
    let load_err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| load_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| load_err(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| load_err(format!("missing column '{name}'")))
    };
    let ts_col = column(&opts.timestamp_column)?;
    let val_col = column(&opts.value_column)?;

    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    let mut dropped = 0;
    let mut duplicates = 0;
    for record in reader.records() {
        let record = record.map_err(|e| load_err(e.to_string()))?;
        let ts = record
            .get(ts_col)
            .and_then(|raw| opts.timestamp_format.to_epoch(raw));
        let value = record
            .get(val_col)
            .and_then(|raw| raw.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite());
        match (ts, value) {
            (Some(ts), Some(value)) => {
                if let std::collections::btree_map::Entry::Vacant(slot) = rows.entry(ts) {
                    slot.insert(value);
                } else {
                    duplicates += 1;
                }
            }
            _ => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyData(path.to_path_buf()));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} unparseable rows", path.display());
    }
    let (timestamps, values) = rows.into_iter().unzip();
    Ok(LoadedSeries {
        series: TimeSeries::new(timestamps, values, opts.unit.clone())?,
        dropped,
        duplicates,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Last,
}

/// One point per non-empty hour, stamped at the bucket start. Empty hours
/// are skipped, never interpolated.
pub fn resample_hourly(series: &TimeSeries, aggregator: Aggregator) -> Result<TimeSeries> {
    if series.is_empty() {
        return Err(Error::InsufficientData(
            "cannot resample an empty series".into(),
        ));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    let ts = series.timestamps();
    let vs = series.values();
    while i < ts.len() {
        let bucket = ts[i].div_euclid(SECONDS_PER_HOUR) * SECONDS_PER_HOUR;
        let mut j = i;
        while j < ts.len() && ts[j].div_euclid(SECONDS_PER_HOUR) * SECONDS_PER_HOUR == bucket {
            j += 1;
        }
        let chunk = &vs[i..j];
        let value = match aggregator {
            Aggregator::Mean => chunk.iter().sum::<f64>() / chunk.len() as f64,
            Aggregator::Last => chunk[chunk.len() - 1],
        };
        timestamps.push(bucket);
        values.push(value);
        i = j;
    }
    TimeSeries::new(timestamps, values, series.unit())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: TimeSeries,
    pub val: TimeSeries,
    pub test: TimeSeries,
}

pub const MIN_SPLIT_LEN: usize = 10;

/// Ordered train/val/test partition at `floor(N * train)` and
/// `floor(N * (train + val))`; rounding leftovers go to the test split.
pub fn split(series: &TimeSeries, fractions: SplitFractions) -> Result<Splits> {
    let SplitFractions { train, val, test } = fractions;
    if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Split("fractions must lie in [0, 1]".into()));
    }
    if (train + val + test - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions sum to {}, expected 1",
            train + val + test
        )));
    }
    let n = series.len();
    if n < MIN_SPLIT_LEN {
        return Err(Error::Split(format!(
            "series has {n} points, need at least {MIN_SPLIT_LEN}"
        )));
    }
    // the epsilon absorbs representation error such as 0.7 + 0.15
    let boundary = |f: f64| ((n as f64 * f + 1e-9).floor() as usize).min(n);
    let b1 = boundary(train);
    let b2 = boundary(train + val).max(b1);
    Ok(Splits {
        train: series.slice(0..b1),
        val: series.slice(b1..b2),
        test: series.slice(b2..n),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizerKind {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "min-max")]
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    kind: NormalizerKind,
    lo: f64,
    hi: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            kind: NormalizerKind::None,
            lo: 0.0,
            hi: 1.0,
        }
    }

    pub fn fit(train: &[f64], kind: NormalizerKind) -> Result<Self> {
        match kind {
            NormalizerKind::None => Ok(Self::identity()),
            NormalizerKind::MinMax => {
                if train.is_empty() {
                    return Err(Error::Normalizer("empty training split".into()));
                }
                let lo = train.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    return Err(Error::Normalizer(format!(
                        "min-max needs a non-degenerate training range, got [{lo}, {hi}]"
                    )));
                }
                Ok(Self { kind, lo, hi })
            }
        }
    }

    pub fn kind(&self) -> NormalizerKind {
        self.kind
    }

    pub fn apply(&self, v: f64) -> f64 {
        match self.kind {
            NormalizerKind::None => v,
            NormalizerKind::MinMax => (v - self.lo) / (self.hi - self.lo),
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        match self.kind {
            NormalizerKind::None => v,
            NormalizerKind::MinMax => v * (self.hi - self.lo) + self.lo,
        }
    }

    pub fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastWindow {
    pub history: Vec<f64>,
    pub target: f64,
    pub origin_index: usize,
}

pub const DEFAULT_WINDOW_LENGTH: usize = 24;

/// Number of windows [`windows`] yields: `floor((n - L - 1) / stride) + 1`.
pub fn window_count(n: usize, length: usize, stride: usize) -> usize {
    if stride == 0 || length == 0 || n < length + 1 {
        0
    } else {
        (n - length - 1) / stride + 1
    }
}

/// Sliding windows of `length` history points and the value that follows.
pub fn windows(values: &[f64], length: usize, stride: usize) -> Vec<ForecastWindow> {
    let count = window_count(values.len(), length, stride);
    if count == 0 {
        log::warn!(
            "split of {} points too short for windows of length {length} (stride {stride})",
            values.len()
        );
    }
    (0..count)
        .map(|i| {
            let origin = i * stride;
            ForecastWindow {
                history: values[origin..origin + length].to_vec(),
                target: values[origin + length],
                origin_index: origin,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    #[default]
    None,
    Hourly,
}

/// Dataset config file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub timestamp_column: String,
    pub value_column: String,
    pub timestamp_format: String,
    pub delimiter: char,
    pub unit: String,
    pub resample: Resample,
    pub aggregator: Aggregator,
    pub normalizer: NormalizerKind,
    pub window_length: usize,
    pub stride: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
            timestamp_format: DEFAULT_TIMESTAMP_FORMAT.into(),
            delimiter: ',',
            unit: String::new(),
            resample: Resample::None,
            aggregator: Aggregator::Mean,
            normalizer: NormalizerKind::None,
            window_length: DEFAULT_WINDOW_LENGTH,
            stride: 1,
        }
    }
}

impl DatasetConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!(
                "cannot read dataset config {}: {e}",
                path.display()
            ))
        })?;
        let mut cfg: DatasetConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative data paths resolve against the config file's directory
        if cfg.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.path = dir.join(&cfg.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 {
            return Err(Error::Config("window_length must be >= 2".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(
                "delimiter must be a single ASCII character".into(),
            ));
        }
        Ok(())
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            timestamp_column: self.timestamp_column.clone(),
            value_column: self.value_column.clone(),
            timestamp_format: TimestampFormat::parse(&self.timestamp_format),
            delimiter: self.delimiter as u8,
            unit: self.unit.clone(),
        }
    }

    /// Loads the file and applies the configured resampling.
    pub fn load(&self) -> Result<TimeSeries> {
        let loaded = load_csv(&self.path, &self.csv_options())?;
        match self.resample {
            Resample::None => Ok(loaded.series),
            Resample::Hourly => resample_hourly(&loaded.series, self.aggregator),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn epoch_opts() -> CsvOptions {
        CsvOptions {
            timestamp_format: TimestampFormat::Epoch,
            ..CsvOptions::default()
        }
    }

    #[test]
    fn load_well_formed() {
        let f = write_csv("timestamp,value\n0,1.5\n60,2.5\n120,3.5\n");
        let loaded = load_csv(f.path(), &epoch_opts()).unwrap();
        assert_eq!(loaded.series.len(), 3);
        assert_eq!(loaded.dropped, 0);
    }

    #[test]
    fn load_drops_malformed_rows() {
        let f = write_csv("timestamp,value\n0,1.5\n60,oops\n120,3.5\n");
        let loaded = load_csv(f.path(), &epoch_opts()).unwrap();
        assert_eq!(loaded.series.len(), 2);
        assert_eq!(loaded.dropped, 1);
    }

    #[test]
    fn load_sorts_and_dedups() {
        let f = write_csv("value,timestamp\n3,120\n1,0\n2,60\n9,60\n");
        let loaded = load_csv(f.path(), &epoch_opts()).unwrap();
        assert_eq!(loaded.series.timestamps(), &[0, 60, 120]);
        assert_eq!(loaded.series.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(loaded.duplicates, 1);
    }

    #[test]
    fn load_parses_datetime_patterns() {
        let f =
            write_csv("Date Time;T (degC)\n01.01.2009 00:10:00;-8.02\n01.01.2009 00:20:00;-8.41\n");
        let opts = CsvOptions {
            timestamp_column: "Date Time".into(),
            value_column: "T (degC)".into(),
            timestamp_format: TimestampFormat::parse("%d.%m.%Y %H:%M:%S"),
            delimiter: b';',
            unit: "°C".into(),
        };
        let loaded = load_csv(f.path(), &opts).unwrap();
        assert_eq!(
            loaded.series.timestamps()[1] - loaded.series.timestamps()[0],
            600
        );
        assert_eq!(loaded.series.values(), &[-8.02, -8.41]);
        assert_eq!(loaded.series.unit(), "°C");
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_csv("/definitely/not/here.csv", &epoch_opts()),
            Err(Error::Load { .. })
        ));
        let f = write_csv("time,value\n0,1\n");
        assert!(matches!(
            load_csv(f.path(), &epoch_opts()),
            Err(Error::Load { .. })
        ));
        let f = write_csv("timestamp,value\nx,y\n");
        assert!(matches!(
            load_csv(f.path(), &epoch_opts()),
            Err(Error::EmptyData(_))
        ));
    }

    #[test]
    fn resample_mean_and_last() {
        let series = TimeSeries::regular(0, 600, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], "").unwrap();
        let mean = resample_hourly(&series, Aggregator::Mean).unwrap();
        assert_eq!(mean.values(), &[3.5]);
        assert_eq!(mean.timestamps(), &[0]);
        let last = resample_hourly(&series, Aggregator::Last).unwrap();
        assert_eq!(last.values(), &[6.0]);
    }

    #[test]
    fn resample_skips_empty_hours() {
        let series = TimeSeries::new(
            vec![0, 1800, 3600, 5400, 3 * 3600 + 60],
            vec![1.0, 3.0, 5.0, 7.0, 9.0],
            "",
        )
        .unwrap();
        let out = resample_hourly(&series, Aggregator::Mean).unwrap();
        assert_eq!(out.timestamps(), &[0, 3600, 3 * 3600]);
        assert_eq!(out.values(), &[2.0, 6.0, 9.0]);

        let two_hours =
            TimeSeries::new(vec![0, 1800, 3600, 5400], vec![1.0, 3.0, 5.0, 7.0], "").unwrap();
        assert_eq!(
            resample_hourly(&two_hours, Aggregator::Mean).unwrap().len(),
            2
        );
    }

    fn lens(n: usize) -> (usize, usize, usize) {
        let series = TimeSeries::regular(0, 1, (0..n).map(|i| i as f64).collect(), "").unwrap();
        let s = split(&series, SplitFractions::default()).unwrap();
        (s.train.len(), s.val.len(), s.test.len())
    }

    #[test]
    fn split_lengths() {
        assert_eq!(lens(100), (70, 15, 15));
        assert_eq!(lens(101), (70, 15, 16));
        assert_eq!(lens(10), (7, 1, 2));
    }

    #[test]
    fn split_rejects_short_or_bad_fractions() {
        let series = TimeSeries::regular(0, 1, vec![0.0; 9], "").unwrap();
        assert!(matches!(
            split(&series, SplitFractions::default()),
            Err(Error::Split(_))
        ));
        let series = TimeSeries::regular(0, 1, vec![0.0; 20], "").unwrap();
        let bad = SplitFractions {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(matches!(split(&series, bad), Err(Error::Split(_))));
    }

    #[test]
    fn normalizer_round_trip() {
        let n = Normalizer::fit(&[0.0, 120.0, 200.0], NormalizerKind::MinMax).unwrap();
        assert_eq!(n.apply(50.0), 0.25);
        assert_eq!(n.invert(0.25), 50.0);
        let id = Normalizer::fit(&[1.0], NormalizerKind::None).unwrap();
        assert_eq!(id.apply(12.85), 12.85);
        assert_eq!(id.invert(12.85), 12.85);
        assert!(matches!(
            Normalizer::fit(&[4.0, 4.0], NormalizerKind::MinMax),
            Err(Error::Normalizer(_))
        ));
    }

    #[test]
    fn window_counts() {
        let values: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let w = windows(&values, 24, 1);
        assert_eq!(w.len(), 6);
        assert_eq!(w[5].origin_index, 5);
        assert_eq!(w[5].target, 29.0);
        assert_eq!(w[0].history, values[0..24].to_vec());
        assert_eq!(windows(&values[..25], 24, 1).len(), 1);
        assert_eq!(windows(&values[..24], 24, 1).len(), 0);
        assert_eq!(windows(&values, 24, 4).len(), 2);
        assert_eq!(window_count(30, 24, 4), 2);
    }

    #[test]
    fn dataset_config_defaults_and_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("ds.json");
        std::fs::write(
            &cfg_path,
            r#"{"path": "data.csv", "normalizer": "min-max", "resample": "hourly"}"#,
        )
        .unwrap();
        let cfg = DatasetConfig::from_json_file(&cfg_path).unwrap();
        assert_eq!(cfg.path, dir.path().join("data.csv"));
        assert_eq!(cfg.normalizer, NormalizerKind::MinMax);
        assert_eq!(cfg.resample, Resample::Hourly);
        assert_eq!(cfg.window_length, 24);
        assert_eq!(cfg.aggregator, Aggregator::Mean);

        std::fs::write(&cfg_path, r#"{"path": "x.csv", "bogus": 1}"#).unwrap();
        assert!(matches!(
            DatasetConfig::from_json_file(&cfg_path),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn time_series_validates() {
        assert!(TimeSeries::new(vec![0, 0], vec![1.0, 2.0], "").is_err());
        assert!(TimeSeries::new(vec![0], vec![1.0, 2.0], "").is_err());
        assert!(TimeSeries::new(vec![0], vec![f64::NAN], "").is_err());
    }
}
