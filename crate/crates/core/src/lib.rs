//! Symbolic transition analysis for prompt-based time-series forecasting.
//!
//! A numeric window is quantized into a small ordered alphabet, its level
//! transitions and minimal period are extracted, and per-transition
//! attention weights are computed as an internal descriptor. The symbolic
//! pattern is appended to a plain numeric prompt, and the evaluation harness
//! compares forecasts from both prompts through a pluggable completion
//! backend.

pub mod analysis;
pub mod attention;
pub mod backend;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod periodicity;
pub mod prompting;
pub mod symbolic;
pub mod synth;

pub use analysis::WindowAnalysis;
pub use attention::{score, AttentionConfig, AttentionWeights};
pub use backend::{
    build_forecaster, parse_numeric, BackendKind, BackendSpec, Completion, Forecaster,
    GenerationParams,
};
pub use dataset::{DatasetConfig, ForecastWindow, Normalizer, NormalizerKind, TimeSeries};
pub use error::{Error, ErrorClass, Result};
pub use evaluation::{
    improvement_pct, mae, mse, run_ablation, run_eval, EvalOptions, EvalReport, PreparedDataset,
};
pub use periodicity::{detect_period, PeriodicityResult};
pub use prompting::{PromptRenderer, PromptTemplate, Task};
pub use symbolic::{Quantizer, SymbolSequence, TransitionSequence};
