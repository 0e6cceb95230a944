//! Command implementations behind the `stm` binary.
//!
//! Every subcommand resolves its settings the same way: a value from the
//! `--config` run file wins over the matching command-line flag, which wins
//! over the built-in default. Defaults match the reference experimental
//! setup (k = 5, temperature 0.12, top_p 0.9, one greedy sample).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use stm_core::dataset::load_csv;
use stm_core::evaluation::{profile_overhead, AblationReport, DEFAULT_ABLATION_KS};
use stm_core::prompting::{PromptBundle, TemplateOverrides, DEFAULT_DECIMALS};
use stm_core::synth::{write_series_csv_file, SynthKind, SynthSpec};
use stm_core::{
    build_forecaster, run_ablation, run_eval, AttentionConfig, BackendKind, BackendSpec,
    DatasetConfig, Error, EvalOptions, EvalReport, GenerationParams, NormalizerKind,
    PreparedDataset, PromptRenderer, PromptTemplate, Quantizer, Result, Task, WindowAnalysis,
};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_OUT_DIR: &str = "stm-out";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PROFILE_WINDOWS: usize = 1000;
pub const DEFAULT_REFERENCE_LATENCY_MS: f64 = 200.0;

const PRECEDENCE: &str =
    "Settings precedence: values in the --config run file override command-line \
flags, which override built-in defaults.";

#[derive(Debug, Parser)]
#[command(
    name = "stm",
    version,
    about = "Symbolic transition analysis and prompt-based forecasting experiments"
)]
#[command(after_help = PRECEDENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a whole series: print its symbolic pattern and write encode.json
    #[command(after_help = PRECEDENCE)]
    Encode(RunArgs),
    /// Symbolic analysis (pattern, period, attention) of every test window; writes analyze.json
    #[command(after_help = PRECEDENCE)]
    Analyze(RunArgs),
    /// Print the base and augmented prompts for the last test window; writes prompts.json
    #[command(after_help = PRECEDENCE)]
    Prompt(RunArgs),
    /// Forecast every test window with both prompts; writes report.json and records.csv
    #[command(after_help = PRECEDENCE)]
    Forecast(RunArgs),
    /// Repeat the forecast for several alphabet sizes; writes ablation.json and ablation.csv
    #[command(after_help = PRECEDENCE)]
    Ablate(RunArgs),
    /// Time the symbolic computation per window; writes profile.json
    #[command(after_help = PRECEDENCE)]
    Profile(RunArgs),
    /// Summarize report.json / ablation.json files as a table
    Report(ReportArgs),
    /// Generate a seeded synthetic series as timestamp,value CSV
    #[command(after_help = PRECEDENCE)]
    Synth(SynthArgs),
}

/// Flags shared by the data-driven subcommands. Unset flags fall through to
/// the run file or the defaults shown in brackets.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run file; its values override flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON dataset description (CSV path, columns, resampling, normalizer, window)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// CSV with `timestamp,value` columns, used when no dataset description is given
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Completion backend: mock | persistence | http [default: mock]
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// HTTP completion endpoint [default: $STM_ENDPOINT_URL]; bearer token read from $STM_API_TOKEN
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Maximum in-flight HTTP requests [default: 4]
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    /// Number of symbol levels [default: 5]
    #[arg(long)]
    pub k: Option<usize>,
    /// Window length L [default: 24]
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Normalizer fitted on the training split: none | min-max [default: none]
    #[arg(long)]
    pub normalizer: Option<NormalizerArg>,
    /// Periodic bonus gamma_p [default: 0.5]
    #[arg(long)]
    pub gamma_p: Option<f64>,
    /// Directional bonus gamma_d [default: 0.2]
    #[arg(long)]
    pub gamma_d: Option<f64>,
    /// Period mismatch tolerance epsilon [default: 0]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sampling temperature [default: 0.12]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus sampling top_p [default: 0.9]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Prompt task: temperature | traffic | custom [default: temperature]
    #[arg(long)]
    pub task: Option<Task>,
    /// JSON template overrides keyed by task name
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Decimals used when rendering values into prompts [default: 2]
    #[arg(long)]
    pub decimals: Option<usize>,
    /// Add a verbalized description of the level shifts to the augmented prompt [default: off]
    #[arg(long)]
    pub describe_transitions: bool,
    /// Output directory [default: stm-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Alphabet sizes for `ablate`, comma separated [default: 3,5,7,9,10]
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Windows timed by `profile` [default: 1000]
    #[arg(long)]
    pub n_windows: Option<usize>,
    /// Reference completion latency for `profile`, in ms [default: 200]
    #[arg(long)]
    pub reference_latency_ms: Option<f64>,
    /// Also time the symbolic computation during `forecast` (report is then not reproducible)
    #[arg(long)]
    pub measure_overhead: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NormalizerArg {
    None,
    MinMax,
}

impl From<NormalizerArg> for NormalizerKind {
    fn from(v: NormalizerArg) -> Self {
        match v {
            NormalizerArg::None => NormalizerKind::None,
            NormalizerArg::MinMax => NormalizerKind::MinMax,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// report.json or ablation.json files written by `forecast` / `ablate`
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// JSON run file; its values override flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shape: sine | sawtooth | step | noise | mix [default: mix]
    #[arg(long)]
    pub kind: Option<SynthKind>,
    /// Number of points [default: 2000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Period in samples [default: 24]
    #[arg(long)]
    pub period: Option<usize>,
    /// Amplitude [default: 5]
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Offset [default: 10]
    #[arg(long)]
    pub offset: Option<f64>,
    /// Gaussian noise standard deviation [default: 0.5]
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// RNG seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV file [default: stm-out/synth.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run file contents. Every field is optional; a present field overrides
/// the corresponding flag. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub backend: Option<BackendSpec>,
    pub templates: Option<PathBuf>,
    pub task: Option<Task>,
    pub k: Option<usize>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub normalizer: Option<NormalizerKind>,
    pub gamma_p: Option<f64>,
    pub gamma_d: Option<f64>,
    pub epsilon: Option<f64>,
    pub generation: Option<GenerationParams>,
    pub decimals: Option<usize>,
    pub describe_transitions: Option<bool>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ks: Option<Vec<usize>>,
    pub n_windows: Option<usize>,
    pub reference_latency_ms: Option<f64>,
    pub measure_overhead: Option<bool>,
    pub synth: Option<SynthSpec>,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read run config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.dataset,
            &mut cfg.input,
            &mut cfg.templates,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_json_file)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub dataset: Option<DatasetConfig>,
    pub backend: BackendSpec,
    pub template: PromptTemplate,
    pub k: usize,
    pub attention: AttentionConfig,
    pub generation: GenerationParams,
    pub decimals: usize,
    pub describe_transitions: bool,
    pub out: PathBuf,
    pub ks: Vec<usize>,
    pub n_windows: usize,
    pub reference_latency_ms: f64,
    pub measure_overhead: bool,
}

impl Settings {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = RunConfig::load(args.config.as_deref())?;

        let window = file.window.or(args.window);
        let stride = file.stride.or(args.stride);
        let normalizer = file.normalizer.or(args.normalizer.map(Into::into));
        let dataset = match (
            file.dataset.or(args.dataset.clone()),
            file.input.or(args.input.clone()),
        ) {
            (Some(path), _) => Some(DatasetConfig::from_json_file(path)?),
            (None, Some(csv)) => Some(DatasetConfig {
                path: csv,
                ..DatasetConfig::default()
            }),
            (None, None) => None,
        }
        .map(|mut d| {
            if let Some(w) = window {
                d.window_length = w;
            }
            if let Some(s) = stride {
                d.stride = s;
            }
            if let Some(n) = normalizer {
                d.normalizer = n;
            }
            d.validate().map(|_| d)
        })
        .transpose()?;

        let backend = match file.backend {
            Some(spec) => spec,
            None => {
                let mut spec = BackendSpec {
                    kind: args.backend.unwrap_or(BackendKind::Mock),
                    endpoint_url: args.endpoint.clone(),
                    ..BackendSpec::default()
                };
                if let Some(c) = args.max_concurrency {
                    spec.max_concurrent_requests = c;
                }
                spec
            }
        };

        let task = file.task.or(args.task).unwrap_or(Task::Temperature);
        let template = match file.templates.or(args.templates.clone()) {
            Some(path) => TemplateOverrides::from_json_file(path)?.resolve(task)?,
            None => TemplateOverrides::default().resolve(task)?,
        };

        let defaults = AttentionConfig::default();
        let attention = AttentionConfig {
            periodic_bonus: file
                .gamma_p
                .or(args.gamma_p)
                .unwrap_or(defaults.periodic_bonus),
            directional_bonus: file
                .gamma_d
                .or(args.gamma_d)
                .unwrap_or(defaults.directional_bonus),
            tolerance: file.epsilon.or(args.epsilon).unwrap_or(defaults.tolerance),
        };
        attention.validate()?;

        let generation = file.generation.unwrap_or_else(|| {
            let d = GenerationParams::default();
            GenerationParams {
                temperature: args.temperature.unwrap_or(d.temperature),
                top_p: args.top_p.unwrap_or(d.top_p),
                ..d
            }
        });
        generation.validate()?;

        Ok(Self {
            dataset,
            backend,
            template,
            k: file.k.or(args.k).unwrap_or(DEFAULT_K),
            attention,
            generation,
            decimals: file.decimals.or(args.decimals).unwrap_or(DEFAULT_DECIMALS),
            describe_transitions: file
                .describe_transitions
                .unwrap_or(args.describe_transitions),
            out: file
                .out
                .or(args.out.clone())
                .unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            ks: file
                .ks
                .or(args.ks.clone())
                .unwrap_or_else(|| DEFAULT_ABLATION_KS.to_vec()),
            n_windows: file
                .n_windows
                .or(args.n_windows)
                .unwrap_or(DEFAULT_PROFILE_WINDOWS),
            reference_latency_ms: file
                .reference_latency_ms
                .or(args.reference_latency_ms)
                .unwrap_or(DEFAULT_REFERENCE_LATENCY_MS),
            measure_overhead: file.measure_overhead.unwrap_or(args.measure_overhead),
        })
    }

    fn dataset_config(&self) -> Result<&DatasetConfig> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no data given: pass --dataset or --input".into()))
    }

    pub fn prepared_dataset(&self) -> Result<PreparedDataset> {
        PreparedDataset::from_config(self.dataset_config()?)
    }

    pub fn renderer(&self) -> PromptRenderer {
        PromptRenderer::new(self.template.clone())
            .with_decimals(self.decimals)
            .with_transition_description(self.describe_transitions)
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            renderer: self.renderer(),
            k: self.k,
            attention: self.attention,
            params: self.generation,
            measure_overhead: self.measure_overhead,
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Pattern and analysis of a whole series, quantizer fitted on that series.
pub fn cmd_encode(settings: &Settings) -> Result<WindowAnalysis> {
    let cfg = settings.dataset_config()?;
    let series = load_csv(&cfg.path, &cfg.csv_options())?.series;
    let quantizer = Quantizer::fit(series.values(), settings.k)?;
    let analysis = WindowAnalysis::run(series.values(), &quantizer, &settings.attention)?;
    let doc = json!({
        "pattern": analysis.pattern,
        "symbols": analysis.symbols.symbols(),
        "deltas": analysis.transitions.deltas(),
        "period": analysis.periodicity.period(),
        "alphas": analysis.attention.alphas(),
        "quantizer": {
            "k": quantizer.k(),
            "lo": quantizer.lo(),
            "hi": quantizer.hi(),
            "labels": quantizer.labels(),
        },
    });
    write_file(
        &settings.out.join("encode.json"),
        to_pretty_json(&doc)?.as_bytes(),
    )?;
    Ok(analysis)
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowSummary {
    pub origin_index: usize,
    pub pattern: String,
    pub period: Option<usize>,
    pub trend_sign: i8,
    pub alphas: Vec<f64>,
}

/// Symbolic analysis of each test window (normalized units, train-fitted quantizer).
pub fn cmd_analyze(settings: &Settings) -> Result<Vec<WindowSummary>> {
    let dataset = settings.prepared_dataset()?;
    let quantizer = dataset.fit_quantizer(settings.k)?;
    let summaries = dataset
        .test_windows()
        .iter()
        .map(|w| {
            let history = dataset.normalizer().apply_all(&w.history);
            let a = WindowAnalysis::run(&history, &quantizer, &settings.attention)?;
            Ok(WindowSummary {
                origin_index: w.origin_index,
                pattern: a.pattern,
                period: a.periodicity.period(),
                trend_sign: a.attention.trend_sign(),
                alphas: a.attention.alphas().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if summaries.is_empty() {
        return Err(Error::InsufficientData(
            "test split yields no windows".into(),
        ));
    }
    write_file(
        &settings.out.join("analyze.json"),
        to_pretty_json(&summaries)?.as_bytes(),
    )?;
    Ok(summaries)
}

/// Both prompts for the last test window.
pub fn cmd_prompt(settings: &Settings) -> Result<PromptBundle> {
    let dataset = settings.prepared_dataset()?;
    let quantizer = dataset.fit_quantizer(settings.k)?;
    let window = dataset
        .test_windows()
        .last()
        .ok_or_else(|| Error::InsufficientData("test split yields no windows".into()))?;
    let history = dataset.normalizer().apply_all(&window.history);
    let bundle = settings
        .renderer()
        .bundle(&history, &quantizer, window.origin_index)?;
    write_file(
        &settings.out.join("prompts.json"),
        to_pretty_json(&bundle)?.as_bytes(),
    )?;
    Ok(bundle)
}

pub fn cmd_forecast(settings: &Settings) -> Result<EvalReport> {
    let dataset = settings.prepared_dataset()?;
    let backend = build_forecaster(&settings.backend)?;
    let report = run_eval(&dataset, backend.as_ref(), &settings.eval_options())?;
    write_file(
        &settings.out.join("report.json"),
        report.to_json()?.as_bytes(),
    )?;
    let mut csv = Vec::new();
    report.write_records_csv(&mut csv)?;
    write_file(&settings.out.join("records.csv"), &csv)?;
    Ok(report)
}

pub fn cmd_ablate(settings: &Settings) -> Result<AblationReport> {
    let dataset = settings.prepared_dataset()?;
    let backend = build_forecaster(&settings.backend)?;
    let runs = run_ablation(
        &dataset,
        backend.as_ref(),
        &settings.eval_options(),
        &settings.ks,
    )?;
    let report = AblationReport::from_runs(&runs)?;
    write_file(
        &settings.out.join("ablation.json"),
        report.to_json()?.as_bytes(),
    )?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&settings.out.join("ablation.csv"), &csv)?;
    Ok(report)
}

pub fn cmd_profile(settings: &Settings) -> Result<stm_core::evaluation::Overhead> {
    let dataset = settings.prepared_dataset()?;
    let overhead = profile_overhead(
        &dataset,
        &settings.eval_options(),
        settings.n_windows,
        settings.reference_latency_ms,
    )?;
    write_file(
        &settings.out.join("profile.json"),
        to_pretty_json(&overhead)?.as_bytes(),
    )?;
    Ok(overhead)
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |p| format!("{p:.2}"))
}

/// Markdown table from report or ablation JSON files.
pub fn cmd_report(files: &[PathBuf]) -> Result<String> {
    let mut out = String::from(
        "| source | k | MAE base | MAE stm | MAE improv % | MSE base | MSE stm | MSE improv % | scored/windows |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let rows: Vec<(
            usize,
            stm_core::evaluation::Metrics,
            stm_core::evaluation::Counts,
        )> = if value.get("metrics").is_some() {
            let r: EvalReport = serde_json::from_value(value)?;
            vec![(r.config_echo.k, r.metrics, r.counts)]
        } else if value.get("per_k").is_some() {
            let r: AblationReport = serde_json::from_value(value)?;
            r.per_k
                .into_iter()
                .map(|k| (k.k, k.metrics, k.counts))
                .collect()
        } else {
            return Err(Error::Config(format!(
                "{} is neither a forecast nor an ablation report",
                path.display()
            )));
        };
        for (k, m, c) in rows {
            out.push_str(&format!(
                "| {} | {k} | {:.6} | {:.6} | {} | {:.6} | {:.6} | {} | {}/{} |\n",
                path.display(),
                m.mae_base,
                m.mae_stm,
                fmt_pct(m.mae_improvement_pct),
                m.mse_base,
                m.mse_stm,
                fmt_pct(m.mse_improvement_pct),
                c.n_scored,
                c.n_windows,
            ));
        }
    }
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(PathBuf, SynthSpec)> {
    let file = RunConfig::load(args.config.as_deref())?;
    // a `synth` section in the run file replaces the shape flags as a whole
    let mut spec = file.synth.unwrap_or_else(|| {
        let d = SynthSpec::default();
        SynthSpec {
            kind: args.kind.unwrap_or(d.kind),
            n: args.n.unwrap_or(d.n),
            period: args.period.unwrap_or(d.period),
            amplitude: args.amplitude.unwrap_or(d.amplitude),
            offset: args.offset.unwrap_or(d.offset),
            noise_std: args.noise_std.unwrap_or(d.noise_std),
            seed: args.seed.unwrap_or(DEFAULT_SEED),
            ..d
        }
    });
    if let Some(seed) = file.seed {
        spec.seed = seed;
    }
    let out = file
        .out
        .or(args.out.clone())
        .unwrap_or_else(|| Path::new(DEFAULT_OUT_DIR).join("synth.csv"));
    let series = spec.generate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_series_csv_file(&series, &out)?;
    Ok((out, spec))
}

/// Process exit code for an error: 2 configuration, 3 data, 4 backend.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        stm_core::ErrorClass::Config => 2,
        stm_core::ErrorClass::Data => 3,
        stm_core::ErrorClass::Backend => 4,
    }
}

/// Executes a parsed command, returning the text to print on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Encode(a) => {
            let settings = Settings::resolve(a)?;
            let analysis = cmd_encode(&settings)?;
            Ok(format!("{}\n", analysis.pattern))
        }
        Command::Analyze(a) => {
            let settings = Settings::resolve(a)?;
            let rows = cmd_analyze(&settings)?;
            let periodic = rows.iter().filter(|r| r.period.is_some()).count();
            let mut text = format!("{} windows, {periodic} periodic\n", rows.len());
            if let Some(last) = rows.last() {
                text.push_str(&format!(
                    "last window @{}: {} period={} trend={}\n",
                    last.origin_index,
                    last.pattern,
                    last.period.map_or_else(|| "none".into(), |p| p.to_string()),
                    last.trend_sign
                ));
            }
            Ok(text)
        }
        Command::Prompt(a) => {
            let settings = Settings::resolve(a)?;
            let b = cmd_prompt(&settings)?;
            Ok(format!(
                "--- base ---\n{}\n--- stm ---\n{}\n",
                b.base_prompt, b.stm_prompt
            ))
        }
        Command::Forecast(a) => {
            let settings = Settings::resolve(a)?;
            let r = cmd_forecast(&settings)?;
            Ok(format!(
                "MAE base {:.6} stm {:.6} ({}%), MSE base {:.6} stm {:.6} ({}%), {}/{} windows scored\n",
                r.metrics.mae_base,
                r.metrics.mae_stm,
                fmt_pct(r.metrics.mae_improvement_pct),
                r.metrics.mse_base,
                r.metrics.mse_stm,
                fmt_pct(r.metrics.mse_improvement_pct),
                r.counts.n_scored,
                r.counts.n_windows
            ))
        }
        Command::Ablate(a) => {
            let settings = Settings::resolve(a)?;
            let r = cmd_ablate(&settings)?;
            let mut text = String::from("k\tmae\tmse\n");
            for row in &r.per_k {
                text.push_str(&format!(
                    "{}\t{:.6}\t{:.6}\n",
                    row.k, row.metrics.mae_stm, row.metrics.mse_stm
                ));
            }
            Ok(text)
        }
        Command::Profile(a) => {
            let settings = Settings::resolve(a)?;
            let o = cmd_profile(&settings)?;
            Ok(format!(
                "{} windows: median {:.4} ms, p95 {:.4} ms, {:.4}% of {} ms\n",
                o.n_windows,
                o.stm_compute_ms_median,
                o.stm_compute_ms_p95,
                o.stm_compute_pct_of_latency,
                o.reference_latency_ms
            ))
        }
        Command::Report(a) => cmd_report(&a.files),
        Command::Synth(a) => {
            let (path, spec) = cmd_synth(a)?;
            Ok(format!("wrote {} points to {}\n", spec.n, path.display()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stm_core::dataset::DEFAULT_WINDOW_LENGTH;

    #[test]
    fn run_file_overrides_flags_which_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, r#"{"k": 7, "input": "data.csv"}"#).unwrap();
        let args = RunArgs {
            config: Some(cfg),
            k: Some(3),
            gamma_p: Some(1.5),
            input: Some("elsewhere.csv".into()),
            ..RunArgs::default()
        };
        let s = Settings::resolve(&args).unwrap();
        assert_eq!(s.k, 7);
        assert_eq!(s.attention.periodic_bonus, 1.5);
        assert_eq!(s.attention.directional_bonus, 0.2);
        assert_eq!(s.dataset.unwrap().path, dir.path().join("data.csv"));
    }

    #[test]
    fn defaults_follow_reference_setup() {
        let s = Settings::resolve(&RunArgs::default()).unwrap();
        assert_eq!(s.k, 5);
        assert_eq!(s.generation, GenerationParams::default());
        assert_eq!(s.generation.temperature, 0.12);
        assert_eq!(s.generation.top_p, 0.9);
        assert_eq!(s.generation.num_return_sequences, 1);
        assert!(!s.generation.do_sample);
        assert_eq!(s.ks, vec![3, 5, 7, 9, 10]);
        assert_eq!(s.decimals, 2);
        assert!(s.dataset.is_none());
        assert_eq!(s.backend.kind, BackendKind::Mock);
    }

    #[test]
    fn unknown_run_file_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        fs::write(&cfg, r#"{"kk": 7}"#).unwrap();
        let err = Settings::resolve(&RunArgs {
            config: Some(cfg),
            ..RunArgs::default()
        })
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn window_flag_overrides_dataset_description() {
        let args = RunArgs {
            input: Some("x.csv".into()),
            window: Some(12),
            stride: Some(3),
            ..RunArgs::default()
        };
        let d = Settings::resolve(&args).unwrap().dataset.unwrap();
        assert_eq!((d.window_length, d.stride), (12, 3));
        assert_ne!(DEFAULT_WINDOW_LENGTH, 12);
    }

    #[test]
    fn ks_flag_parses_comma_list() {
        let cli = Cli::try_parse_from(["stm", "ablate", "--ks", "3,5"]).unwrap();
        let Command::Ablate(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.ks, Some(vec![3, 5]));
    }
}
