//! Seeded synthetic series for exercising the pipeline without external data.

use std::io::Write;
use std::path::Path;

use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{TimeSeries, DEFAULT_TIMESTAMP_FORMAT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Sine,
    Sawtooth,
    Step,
    Noise,
    /// Sine plus a slow ramp, occasional level steps and Gaussian noise.
    Mix,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(SynthKind::Sine),
            "sawtooth" => Ok(SynthKind::Sawtooth),
            "step" => Ok(SynthKind::Step),
            "noise" => Ok(SynthKind::Noise),
            "mix" => Ok(SynthKind::Mix),
            other => Err(Error::Config(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub period: usize,
    pub amplitude: f64,
    pub offset: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Epoch seconds of the first sample.
    pub start: i64,
    pub step_seconds: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::Mix,
            n: 2000,
            period: 24,
            amplitude: 5.0,
            offset: 10.0,
            noise_std: 0.5,
            seed: 42,
            start: 1_230_768_000, // 2009-01-01T00:00:00Z
            step_seconds: 3600,
        }
    }
}

impl SynthSpec {
    pub fn generate(&self) -> Result<TimeSeries> {
        if self.n == 0 || self.period == 0 || self.step_seconds <= 0 {
            return Err(Error::Config(
                "n, period and step_seconds must be positive".into(),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let p = self.period as f64;
        let mut level = 0.0;
        let values = (0..self.n)
            .map(|i| {
                let phase = (i % self.period) as f64 / p;
                let base = match self.kind {
                    SynthKind::Sine => self.amplitude * (std::f64::consts::TAU * phase).sin(),
                    SynthKind::Sawtooth => self.amplitude * (2.0 * phase - 1.0),
                    SynthKind::Step => {
                        if (i / self.period).is_multiple_of(2) {
                            -self.amplitude
                        } else {
                            self.amplitude
                        }
                    }
                    SynthKind::Noise => 0.0,
                    SynthKind::Mix => {
                        if i > 0 && rng.random::<f64>() < 1.0 / (8.0 * p) {
                            level += rng.random_range(-1.0..1.0) * self.amplitude;
                        }
                        self.amplitude * (std::f64::consts::TAU * phase).sin()
                            + level
                            + 0.001 * i as f64
                    }
                };
                let jitter = if self.kind == SynthKind::Sawtooth || self.noise_std == 0.0 {
                    0.0
                } else {
                    noise.sample(&mut rng)
                };
                self.offset + base + jitter
            })
            .collect();
        TimeSeries::regular(self.start, self.step_seconds, values, "")
    }
}

/// Writes `timestamp,value` rows using the default timestamp pattern.
pub fn write_series_csv<W: Write>(series: &TimeSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "value"])
        .map_err(|e| Error::Io(e.into()))?;
    for (&ts, &v) in series.timestamps().iter().zip(series.values()) {
        let stamp = DateTime::from_timestamp(ts, 0)
            .ok_or_else(|| Error::Config(format!("timestamp {ts} out of range")))?
            .naive_utc()
            .format(DEFAULT_TIMESTAMP_FORMAT)
            .to_string();
        w.write_record([stamp, v.to_string()])
            .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv_file(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_series_csv(series, std::io::BufWriter::new(file))
}
