//! Base-vs-augmented forecasting runs, error metrics, the symbol-count
//! ablation and STM compute profiling.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::WindowAnalysis;
use crate::attention::AttentionConfig;
use crate::backend::{Completion, CompletionRequest, Forecaster, GenerationParams};
use crate::dataset::{
    split, windows, DatasetConfig, ForecastWindow, Normalizer, NormalizerKind, SplitFractions,
    Splits, TimeSeries,
};
use crate::error::{Error, Result};
use crate::prompting::PromptRenderer;
use crate::symbolic::Quantizer;

pub const DEFAULT_ABLATION_KS: [usize; 5] = [3, 5, 7, 9, 10];
pub const MIN_PROFILE_WINDOWS: usize = 30;

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Metric("no samples".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::Metric(format!(
            "{} ground-truth values vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite sample".into()));
    }
    Ok(())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    Ok(truth
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / truth.len() as f64)
}

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    Ok(truth
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / truth.len() as f64)
}

/// `100 * (base - treated) / base`.
pub fn improvement_pct(base: f64, treated: f64) -> Result<f64> {
    if base.is_nan() || base <= 0.0 || base.is_infinite() {
        return Err(Error::UndefinedImprovement(base));
    }
    Ok(100.0 * (base - treated) / base)
}

/// Data and test windows prepared once and shared across runs.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    source: Option<PathBuf>,
    splits: Splits,
    normalizer: Normalizer,
    window_length: usize,
    stride: usize,
    test_windows: Vec<ForecastWindow>,
}

impl PreparedDataset {
    pub fn from_config(cfg: &DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        let series = cfg.load()?;
        let mut prepared =
            Self::from_series(&series, cfg.normalizer, cfg.window_length, cfg.stride)?;
        prepared.source = Some(cfg.path.clone());
        Ok(prepared)
    }

    /// Splits 70/15/15, fits the normalizer on train and cuts test windows.
    pub fn from_series(
        series: &TimeSeries,
        normalizer: NormalizerKind,
        window_length: usize,
        stride: usize,
    ) -> Result<Self> {
        if window_length < 2 {
            return Err(Error::Config("window length must be >= 2".into()));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        let splits = split(series, SplitFractions::default())?;
        let normalizer = Normalizer::fit(splits.train.values(), normalizer)?;
        let test_windows = windows(splits.test.values(), window_length, stride);
        Ok(Self {
            source: None,
            splits,
            normalizer,
            window_length,
            stride,
            test_windows,
        })
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Test windows in original units.
    pub fn test_windows(&self) -> &[ForecastWindow] {
        &self.test_windows
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Normalized training values, the quantizer's fitting range.
    pub fn normalized_train(&self) -> Vec<f64> {
        self.normalizer.apply_all(self.splits.train.values())
    }

    pub fn fit_quantizer(&self, k: usize) -> Result<Quantizer> {
        Quantizer::fit(&self.normalized_train(), k)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub renderer: PromptRenderer,
    pub k: usize,
    pub attention: AttentionConfig,
    pub params: GenerationParams,
    /// Time the STM computation per window; makes the report non-reproducible.
    pub measure_overhead: bool,
}

impl EvalOptions {
    pub fn new(renderer: PromptRenderer) -> Self {
        Self {
            renderer,
            k: 5,
            attention: AttentionConfig::default(),
            params: GenerationParams::default(),
            measure_overhead: false,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin_index: usize,
    pub ground_truth: f64,
    pub base_pred: Option<f64>,
    pub stm_pred: Option<f64>,
    pub base_parse_failed: bool,
    pub stm_parse_failed: bool,
    pub base_error: Option<String>,
    pub stm_error: Option<String>,
}

impl ForecastRecord {
    pub fn base_abs_err(&self) -> Option<f64> {
        self.base_pred.map(|p| (p - self.ground_truth).abs())
    }

    pub fn stm_abs_err(&self) -> Option<f64> {
        self.stm_pred.map(|p| (p - self.ground_truth).abs())
    }

    fn scored(&self) -> bool {
        self.base_pred.is_some() && self.stm_pred.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae_base: f64,
    pub mae_stm: f64,
    pub mse_base: f64,
    pub mse_stm: f64,
    pub mae_improvement_pct: Option<f64>,
    pub mse_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub n_windows: usize,
    /// Windows with a parsed prediction for both prompts.
    pub n_scored: usize,
    pub n_parse_failures: usize,
    pub n_backend_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overhead {
    pub n_windows: usize,
    pub stm_compute_ms_median: f64,
    pub stm_compute_ms_p95: f64,
    pub stm_compute_ms_mean: f64,
    pub reference_latency_ms: f64,
    pub stm_compute_pct_of_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub source: Option<PathBuf>,
    pub task: String,
    pub backend: String,
    pub k: usize,
    pub window_length: usize,
    pub stride: usize,
    pub normalizer: NormalizerKind,
    pub decimals: usize,
    pub attention: AttentionConfig,
    pub generation: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub k: usize,
    pub metrics: Metrics,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_echo: ConfigEcho,
    pub metrics: Metrics,
    pub counts: Counts,
    pub overhead: Option<Overhead>,
    pub per_k: Option<Vec<KReport>>,
    #[serde(skip)]
    pub records: Vec<ForecastRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.records, out)
    }
}

/// `origin_index,ground_truth,base_pred,stm_pred,base_abs_err,stm_abs_err`;
/// missing predictions are empty cells.
pub fn write_records_csv<W: Write>(records: &[ForecastRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "origin_index",
        "ground_truth",
        "base_pred",
        "stm_pred",
        "base_abs_err",
        "stm_abs_err",
    ])
    .map_err(|e| Error::Io(e.into()))?;
    for r in records {
        w.write_record([
            r.origin_index.to_string(),
            r.ground_truth.to_string(),
            cell(r.base_pred),
            cell(r.stm_pred),
            cell(r.base_abs_err()),
            cell(r.stm_abs_err()),
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

struct WindowOutcome {
    record: ForecastRecord,
    stm_compute_ms: f64,
    stm_latency_ms: Option<f64>,
}

fn query(
    backend: &dyn Forecaster,
    prompt: &str,
    history: &[f64],
    opts: &EvalOptions,
) -> std::result::Result<Completion, String> {
    backend
        .complete(&CompletionRequest {
            prompt,
            history,
            decimals: opts.renderer.decimals(),
            params: &opts.params,
        })
        .map_err(|e| e.to_string())
}

fn evaluate_window(
    window: &ForecastWindow,
    dataset: &PreparedDataset,
    quantizer: &Quantizer,
    backend: &dyn Forecaster,
    opts: &EvalOptions,
) -> Result<WindowOutcome> {
    let normalizer = dataset.normalizer();
    let history = normalizer.apply_all(&window.history);

    let started = Instant::now();
    let analysis = WindowAnalysis::run(&history, quantizer, &opts.attention)?;
    let base_prompt = opts.renderer.base_prompt(&history)?;
    let stm_prompt = opts
        .renderer
        .stm_prompt(&history, &analysis.pattern, quantizer)?;
    let stm_compute_ms = started.elapsed().as_secs_f64() * 1e3;

    let base = query(backend, &base_prompt, &history, opts);
    let stm = query(backend, &stm_prompt, &history, opts);
    let stm_latency_ms = stm.as_ref().ok().map(|c| c.latency_ms);

    let split = |res: std::result::Result<Completion, String>| match res {
        Ok(c) => (
            c.parsed_value.map(|v| normalizer.invert(v)),
            c.parsed_value.is_none(),
            None,
        ),
        Err(e) => (None, false, Some(e)),
    };
    let (base_pred, base_parse_failed, base_error) = split(base);
    let (stm_pred, stm_parse_failed, stm_error) = split(stm);
    Ok(WindowOutcome {
        record: ForecastRecord {
            origin_index: window.origin_index,
            ground_truth: window.target,
            base_pred,
            stm_pred,
            base_parse_failed,
            stm_parse_failed,
            base_error,
            stm_error,
        },
        stm_compute_ms,
        stm_latency_ms,
    })
}

fn worker_count(backend: &dyn Forecaster, jobs: usize) -> usize {
    let cpus = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    backend.max_concurrency().min(cpus.max(4)).min(jobs).max(1)
}

fn metrics_from(records: &[ForecastRecord]) -> Result<Metrics> {
    let scored: Vec<&ForecastRecord> = records.iter().filter(|r| r.scored()).collect();
    if scored.is_empty() {
        return Err(Error::Eval(
            "no window produced parseable predictions for both prompts".into(),
        ));
    }
    let truth: Vec<f64> = scored.iter().map(|r| r.ground_truth).collect();
    let base: Vec<f64> = scored.iter().filter_map(|r| r.base_pred).collect();
    let stm: Vec<f64> = scored.iter().filter_map(|r| r.stm_pred).collect();
    let (mae_base, mae_stm) = (mae(&truth, &base)?, mae(&truth, &stm)?);
    let (mse_base, mse_stm) = (mse(&truth, &base)?, mse(&truth, &stm)?);
    Ok(Metrics {
        mae_base,
        mae_stm,
        mse_base,
        mse_stm,
        mae_improvement_pct: improvement_pct(mae_base, mae_stm).ok(),
        mse_improvement_pct: improvement_pct(mse_base, mse_stm).ok(),
    })
}

fn counts_from(records: &[ForecastRecord]) -> Counts {
    Counts {
        n_windows: records.len(),
        n_scored: records.iter().filter(|r| r.scored()).count(),
        n_parse_failures: records
            .iter()
            .map(|r| r.base_parse_failed as usize + r.stm_parse_failed as usize)
            .sum(),
        n_backend_errors: records
            .iter()
            .map(|r| r.base_error.is_some() as usize + r.stm_error.is_some() as usize)
            .sum(),
    }
}

fn median_and_p95(samples: &mut [f64]) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    };
    // nearest rank
    let p95 = samples[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    (median, p95)
}

fn overhead_from(mut samples: Vec<f64>, reference_latency_ms: f64) -> Overhead {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let (median, p95) = median_and_p95(&mut samples);
    Overhead {
        n_windows: n,
        stm_compute_ms_median: median,
        stm_compute_ms_p95: p95,
        stm_compute_ms_mean: mean,
        reference_latency_ms,
        stm_compute_pct_of_latency: 100.0 * median / reference_latency_ms,
    }
}

/// Queries the backend with the base and the augmented prompt for every
/// test window and aggregates errors in original units.
///
/// The quantizer is fitted on the (normalized) training split only. Windows
/// run concurrently up to the backend's bound; records are sorted by origin
/// before aggregation, so the report does not depend on scheduling.
pub fn run_eval(
    dataset: &PreparedDataset,
    backend: &dyn Forecaster,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    opts.attention.validate()?;
    opts.params.validate()?;
    let windows = dataset.test_windows();
    if windows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "test split of {} points yields no windows of length {}",
            dataset.splits().test.len(),
            dataset.window_length()
        )));
    }
    let quantizer = dataset.fit_quantizer(opts.k)?;

    let next = AtomicUsize::new(0);
    let outcomes = Mutex::new(Vec::with_capacity(windows.len()));
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(backend, windows.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= windows.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                match evaluate_window(&windows[i], dataset, &quantizer, backend, opts) {
                    Ok(outcome) => outcomes.lock().unwrap().push(outcome),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by_key(|o| o.record.origin_index);

    if outcomes
        .iter()
        .all(|o| o.record.base_error.is_some() && o.record.stm_error.is_some())
    {
        let first = outcomes[0].record.base_error.clone().unwrap_or_default();
        return Err(Error::Eval(format!(
            "backend failed on every window: {first}"
        )));
    }

    let overhead = if opts.measure_overhead {
        let mut latencies: Vec<f64> = outcomes.iter().filter_map(|o| o.stm_latency_ms).collect();
        let reference = if latencies.is_empty() {
            f64::NAN
        } else {
            median_and_p95(&mut latencies).0
        };
        Some(overhead_from(
            outcomes.iter().map(|o| o.stm_compute_ms).collect(),
            reference,
        ))
    } else {
        None
    };

    let records: Vec<ForecastRecord> = outcomes.into_iter().map(|o| o.record).collect();
    Ok(EvalReport {
        config_echo: ConfigEcho {
            source: dataset.source.clone(),
            task: opts.renderer.template().task().name().to_string(),
            backend: backend.name().to_string(),
            k: opts.k,
            window_length: dataset.window_length(),
            stride: dataset.stride(),
            normalizer: dataset.normalizer().kind(),
            decimals: opts.renderer.decimals(),
            attention: opts.attention,
            generation: opts.params,
        },
        metrics: metrics_from(&records)?,
        counts: counts_from(&records),
        overhead,
        per_k: None,
        records,
    })
}

/// One [`run_eval`] per alphabet size over the same windows and backend.
pub fn run_ablation(
    dataset: &PreparedDataset,
    backend: &dyn Forecaster,
    opts: &EvalOptions,
    ks: &[usize],
) -> Result<Vec<(usize, EvalReport)>> {
    if ks.is_empty() {
        return Err(Error::Config("ablation needs at least one k".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k < 2) {
        return Err(Error::Config(format!("ablation k must be >= 2, got {k}")));
    }
    ks.iter()
        .map(|&k| {
            let run = EvalOptions { k, ..opts.clone() };
            Ok((k, run_eval(dataset, backend, &run)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_echo: ConfigEcho,
    pub per_k: Vec<KReport>,
}

impl AblationReport {
    pub fn from_runs(runs: &[(usize, EvalReport)]) -> Result<Self> {
        let (_, first) = runs
            .first()
            .ok_or_else(|| Error::Config("no ablation runs".into()))?;
        Ok(Self {
            config_echo: first.config_echo.clone(),
            per_k: runs
                .iter()
                .map(|(k, r)| KReport {
                    k: *k,
                    metrics: r.metrics.clone(),
                    counts: r.counts.clone(),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// `k,mae,mse,mae_base,mse_base` with `mae`/`mse` from the augmented prompts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mae", "mse", "mae_base", "mse_base"])
            .map_err(|e| Error::Io(e.into()))?;
        for row in &self.per_k {
            w.write_record([
                row.k.to_string(),
                row.metrics.mae_stm.to_string(),
                row.metrics.mse_stm.to_string(),
                row.metrics.mae_base.to_string(),
                row.metrics.mse_base.to_string(),
            ])
            .map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Times encode, transitions, period search, scoring and prompt rendering
/// per window over up to `n_windows` windows drawn from the whole series.
pub fn profile_overhead(
    dataset: &PreparedDataset,
    opts: &EvalOptions,
    n_windows: usize,
    reference_latency_ms: f64,
) -> Result<Overhead> {
    if n_windows < MIN_PROFILE_WINDOWS {
        return Err(Error::Profiling(format!(
            "need at least {MIN_PROFILE_WINDOWS} windows for a stable median, got {n_windows}"
        )));
    }
    if !(reference_latency_ms.is_finite() && reference_latency_ms > 0.0) {
        return Err(Error::Profiling(format!(
            "reference latency must be > 0 ms, got {reference_latency_ms}"
        )));
    }
    opts.attention.validate()?;
    let quantizer = dataset.fit_quantizer(opts.k)?;
    let splits = dataset.splits();
    let full = TimeSeries::concat(&[&splits.train, &splits.val, &splits.test])?;
    let normalized = dataset.normalizer().apply_all(full.values());
    let pool = windows(&normalized, dataset.window_length(), dataset.stride());
    if pool.len() < MIN_PROFILE_WINDOWS {
        return Err(Error::Profiling(format!(
            "series yields only {} windows, need at least {MIN_PROFILE_WINDOWS}",
            pool.len()
        )));
    }
    let mut samples = Vec::with_capacity(n_windows.min(pool.len()));
    for window in pool.iter().take(n_windows) {
        let started = Instant::now();
        let analysis = WindowAnalysis::run(&window.history, &quantizer, &opts.attention)?;
        let prompt = opts
            .renderer
            .stm_prompt(&window.history, &analysis.pattern, &quantizer)?;
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box((&analysis, &prompt));
        samples.push(elapsed);
    }
    Ok(overhead_from(samples, reference_latency_ms))
}
