//! Forecasting backends behind a text-completion interface.
//!
//! `mock` answers with the last number in the prompt's first line (the base
//! prompt; augmented suffixes start on the next line), `persistence` answers
//! with the last value of the structured window, and `http` posts the prompt
//! to a completion endpoint.

use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::render_sequence;

pub const DEFAULT_ENDPOINT_ENV: &str = "STM_ENDPOINT_URL";
pub const DEFAULT_TOKEN_ENV: &str = "STM_API_TOKEN";

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub num_return_sequences: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub do_sample: bool,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            num_return_sequences: 1,
            temperature: 0.12,
            top_p: 0.9,
            do_sample: false,
            max_new_tokens: 16,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.num_return_sequences < 1 {
            return Err(Error::Config("num_return_sequences must be >= 1".into()));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::Config("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Persistence,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "persistence" => Ok(BackendKind::Persistence),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }
}

/// Which number to take from generated text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    /// Consulted when `endpoint_url` is unset.
    pub endpoint_env_var: String,
    pub auth_token_env_var: String,
    pub timeout_ms: u64,
    pub max_concurrent_requests: usize,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub parse_mode: ParseMode,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: None,
            endpoint_env_var: DEFAULT_ENDPOINT_ENV.into(),
            auth_token_env_var: DEFAULT_TOKEN_ENV.into(),
            timeout_ms: 30_000,
            max_concurrent_requests: 4,
            retries: 2,
            retry_backoff_ms: 200,
            parse_mode: ParseMode::First,
        }
    }
}

impl BackendSpec {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn persistence() -> Self {
        Self {
            kind: BackendKind::Persistence,
            ..Self::default()
        }
    }

    pub fn http(endpoint_url: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            ..Self::default()
        }
    }

    /// Endpoint from the spec, falling back to the configured env var.
    pub fn resolve_endpoint(&self) -> Option<String> {
        self.endpoint_url
            .clone()
            .filter(|u| !u.is_empty())
            .or_else(|| {
                std::env::var(&self.endpoint_env_var)
                    .ok()
                    .filter(|u| !u.is_empty())
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent_requests == 0 {
            return Err(Error::Config("max_concurrent_requests must be >= 1".into()));
        }
        if self.kind == BackendKind::Http {
            if self.resolve_endpoint().is_none() {
                return Err(Error::Config(format!(
                    "http backend needs endpoint_url or ${}",
                    self.endpoint_env_var
                )));
            }
            if self.timeout_ms == 0 {
                return Err(Error::Config("timeout_ms must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub raw_text: String,
    pub parsed_value: Option<f64>,
    pub latency_ms: f64,
}

impl Completion {
    fn from_text(raw_text: String, mode: ParseMode, started: Instant) -> Self {
        let parsed_value = parse_numeric_with(&raw_text, mode);
        Self {
            raw_text,
            parsed_value,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

/// Everything a backend may look at for one query.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    /// Window values as rendered into the prompt (normalized units).
    pub history: &'a [f64],
    pub decimals: usize,
    pub params: &'a GenerationParams,
}

pub trait Forecaster: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion>;

    /// Upper bound on simultaneous `complete` calls the caller should issue.
    fn max_concurrency(&self) -> usize {
        1
    }

    fn name(&self) -> &str;
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[-+\x{2212}]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+\x{2212}]?\d+)?")
            .expect("valid number regex")
    })
}

fn number_to_f64(m: &str) -> Option<f64> {
    let cleaned: String = m
        .chars()
        .filter(|&c| c != ',')
        .map(|c| if c == '\u{2212}' { '-' } else { c })
        .collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// First number in `text`, if any.
pub fn parse_numeric(text: &str) -> Option<f64> {
    parse_numeric_with(text, ParseMode::First)
}

pub fn parse_numeric_with(text: &str, mode: ParseMode) -> Option<f64> {
    let mut matches = number_regex().find_iter(text);
    let m = match mode {
        ParseMode::First => matches.next(),
        ParseMode::Last => matches.last(),
    }?;
    number_to_f64(m.as_str())
}

/// Prompt-only persistence: echoes the last number on the first prompt line.
#[derive(Debug, Clone, Default)]
pub struct MockForecaster {
    parse_mode: ParseMode,
}

impl MockForecaster {
    pub fn new(parse_mode: ParseMode) -> Self {
        Self { parse_mode }
    }
}

impl Forecaster for MockForecaster {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        let started = Instant::now();
        let first_line = request.prompt.lines().next().unwrap_or_default();
        let raw = number_regex()
            .find_iter(first_line)
            .last()
            .map(|m| m.as_str().to_string())
            .unwrap_or_default();
        Ok(Completion::from_text(raw, self.parse_mode, started))
    }

    fn max_concurrency(&self) -> usize {
        usize::MAX
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Structured persistence: the last history value, rendered like the prompt.
#[derive(Debug, Clone, Default)]
pub struct PersistenceForecaster {
    parse_mode: ParseMode,
}

impl PersistenceForecaster {
    pub fn new(parse_mode: ParseMode) -> Self {
        Self { parse_mode }
    }
}

impl Forecaster for PersistenceForecaster {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        let started = Instant::now();
        let last = request.history.last().ok_or_else(|| {
            Error::InsufficientData("persistence needs a non-empty window".into())
        })?;
        let raw = render_sequence(&[*last], request.decimals);
        Ok(Completion::from_text(raw, self.parse_mode, started))
    }

    fn max_concurrency(&self) -> usize {
        usize::MAX
    }

    fn name(&self) -> &str {
        "persistence"
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self
                .freed
                .wait(available)
                .unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Serialize)]
struct CompletionBody<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    do_sample: bool,
    n: u32,
    max_new_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

enum Attempt {
    Done(String),
    Retry(Error),
    Fail(Error),
}

pub struct HttpForecaster {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    timeout_ms: u64,
    retries: u32,
    backoff: Duration,
    parse_mode: ParseMode,
    max_concurrent: usize,
    gate: Gate,
}

impl HttpForecaster {
    pub fn new(spec: &BackendSpec) -> Result<Self> {
        spec.validate()?;
        let endpoint = spec
            .resolve_endpoint()
            .ok_or_else(|| Error::Config("http backend needs an endpoint".into()))?;
        let token = std::env::var(&spec.auth_token_env_var)
            .ok()
            .filter(|t| !t.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            token,
            timeout_ms: spec.timeout_ms,
            retries: spec.retries,
            backoff: Duration::from_millis(spec.retry_backoff_ms),
            parse_mode: spec.parse_mode,
            max_concurrent: spec.max_concurrent_requests,
            gate: Gate::new(spec.max_concurrent_requests),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &CompletionBody<'_>) -> Attempt {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if (200..300).contains(&status) {
                    match resp.body_mut().read_json::<CompletionResponse>() {
                        Ok(parsed) => Attempt::Done(parsed.text),
                        Err(e) => Attempt::Fail(Error::backend(
                            Some(status),
                            format!("malformed response body: {e}"),
                        )),
                    }
                } else {
                    let detail = resp.body_mut().read_to_string().unwrap_or_default();
                    let err = Error::backend(Some(status), detail.trim().to_string());
                    if status == 429 || status >= 500 {
                        Attempt::Retry(err)
                    } else {
                        Attempt::Fail(err)
                    }
                }
            }
            Err(ureq::Error::Timeout(_)) => Attempt::Retry(Error::Timeout(self.timeout_ms)),
            Err(e) => Attempt::Retry(Error::backend(None, e.to_string())),
        }
    }
}

impl Forecaster for HttpForecaster {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        if request.prompt.is_empty() {
            return Err(Error::Config("prompt must be non-empty".into()));
        }
        let params = request.params;
        let body = CompletionBody {
            prompt: request.prompt,
            temperature: params.temperature,
            top_p: params.top_p,
            do_sample: params.do_sample,
            n: params.num_return_sequences,
            max_new_tokens: params.max_new_tokens,
        };
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut last_err = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    let text = text
                        .strip_prefix(request.prompt)
                        .unwrap_or(&text)
                        .trim()
                        .to_string();
                    return Ok(Completion::from_text(text, self.parse_mode, started));
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::debug!(
                        "attempt {} against {} failed: {e}",
                        attempt + 1,
                        self.endpoint
                    );
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.unwrap_or_else(|| Error::backend(None, "no attempts made")))
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrent
    }

    fn name(&self) -> &str {
        "http"
    }
}

pub fn build_forecaster(spec: &BackendSpec) -> Result<Box<dyn Forecaster>> {
    spec.validate()?;
    Ok(match spec.kind {
        BackendKind::Mock => Box::new(MockForecaster::new(spec.parse_mode)),
        BackendKind::Persistence => Box::new(PersistenceForecaster::new(spec.parse_mode)),
        BackendKind::Http => Box::new(HttpForecaster::new(spec)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request<'a>(
        prompt: &'a str,
        history: &'a [f64],
        params: &'a GenerationParams,
    ) -> CompletionRequest<'a> {
        CompletionRequest {
            prompt,
            history,
            decimals: 2,
            params,
        }
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_numeric("The next temperature is 12.48 degrees"),
            Some(12.48)
        );
        assert_eq!(parse_numeric("no idea"), None);
        assert_eq!(parse_numeric("\u{2212}3.5e2 then 7"), Some(-350.0));
        assert_eq!(parse_numeric("-3.5e2 then 7"), Some(-350.0));
        assert_eq!(
            parse_numeric_with("-3.5e2 then 7", ParseMode::Last),
            Some(7.0)
        );
    }

    #[test]
    fn parse_handles_thousands_separators() {
        assert_eq!(
            parse_numeric("about 273,000,000 tokens"),
            Some(273_000_000.0)
        );
        assert_eq!(parse_numeric("1,234.5"), Some(1234.5));
        assert_eq!(parse_numeric("10.00, 11.00"), Some(10.0));
        assert_eq!(
            parse_numeric_with("10.00, 11.00", ParseMode::Last),
            Some(11.0)
        );
    }

    #[test]
    fn default_params_match_reported_settings() {
        let p = GenerationParams::default();
        assert_eq!(p.num_return_sequences, 1);
        assert_eq!(p.temperature, 0.12);
        assert_eq!(p.top_p, 0.9);
        assert!(!p.do_sample);
        p.validate().unwrap();
        assert!(GenerationParams {
            temperature: 0.0,
            ..p
        }
        .validate()
        .is_err());
        assert!(GenerationParams { top_p: 1.5, ..p }.validate().is_err());
        assert!(GenerationParams {
            num_return_sequences: 0,
            ..p
        }
        .validate()
        .is_err());
    }

    #[test]
    fn mock_returns_last_number_of_base_line() {
        let params = GenerationParams::default();
        let prompt = "The temperature readings for the past 24 hours are: 10.00, 11.00, What is the next temperature reading?";
        let c = MockForecaster::default()
            .complete(&request(prompt, &[], &params))
            .unwrap();
        assert_eq!(c.raw_text, "11.00");
        assert_eq!(c.parsed_value, Some(11.0));

        let augmented = format!("{prompt}\nSymbolic pattern (A=level 1 of 3): AB");
        let c2 = MockForecaster::default()
            .complete(&request(&augmented, &[], &params))
            .unwrap();
        assert_eq!(c2.raw_text, c.raw_text);
    }

    #[test]
    fn mock_without_numbers_fails_to_parse() {
        let params = GenerationParams::default();
        let c = MockForecaster::default()
            .complete(&request("nothing here", &[], &params))
            .unwrap();
        assert_eq!(c.parsed_value, None);
    }

    #[test]
    fn persistence_returns_last_value() {
        let params = GenerationParams::default();
        let p = PersistenceForecaster::default();
        let c = p
            .complete(&request("ignored", &[3.0, 7.0, 5.0], &params))
            .unwrap();
        assert_eq!(c.parsed_value, Some(5.0));
        assert_eq!(c.raw_text, "5.00");
        assert!(p.complete(&request("ignored", &[], &params)).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(BackendSpec::mock().validate().is_ok());
        let mut spec = BackendSpec {
            kind: BackendKind::Http,
            endpoint_env_var: "STM_TEST_UNSET_ENDPOINT_VAR".into(),
            ..BackendSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.endpoint_url = Some("http://127.0.0.1:9".into());
        assert!(spec.validate().is_ok());
        spec.max_concurrent_requests = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn backend_spec_json_defaults() {
        let spec: BackendSpec =
            serde_json::from_str(r#"{"kind": "http", "endpoint_url": "http://x"}"#).unwrap();
        assert_eq!(spec.auth_token_env_var, DEFAULT_TOKEN_ENV);
        assert_eq!(spec.retries, 2);
        assert_eq!(spec.parse_mode, ParseMode::First);
    }
}
