//! Base and symbol-augmented prompt rendering.
//!
//! The augmented prompt is always the base prompt, a newline, and a suffix
//! carrying the symbolic pattern. Transition magnitudes, periods and
//! attention weights never appear in either prompt.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::Quantizer;

pub const SEQUENCE_SLOT: &str = "{sequence_str}";
pub const PATTERN_SLOT: &str = "{pattern}";
pub const LEGEND_SLOT: &str = "{legend}";
pub const SUFFIX_SEPARATOR: &str = "\n";

pub const TEMPERATURE_BASE: &str =
    "The temperature readings for the past 24 hours are: {sequence_str}, What is the next temperature reading?";
pub const TRAFFIC_BASE: &str = "Given the following sequence of normalized inference traffic values: {sequence_str}, Predict the next traffic value based on pattern and trends.";
pub const DEFAULT_STM_SUFFIX: &str = "Symbolic pattern ({legend}): {pattern}";
pub const DEFAULT_DECIMALS: usize = 2;

const FIVE_LEVEL_NAMES: [&str; 5] = ["very low", "low", "medium", "high", "very high"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Temperature,
    Traffic,
    Custom,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Temperature => "temperature",
            Task::Traffic => "traffic",
            Task::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(Task::Temperature),
            "traffic" => Ok(Task::Traffic),
            "custom" => Ok(Task::Custom),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    task: Task,
    base_text: String,
    stm_suffix_text: String,
}

fn count_slot(text: &str, slot: &str) -> usize {
    text.matches(slot).count()
}

impl PromptTemplate {
    pub fn new(
        task: Task,
        base_text: impl Into<String>,
        stm_suffix_text: impl Into<String>,
    ) -> Result<Self> {
        let template = Self {
            task,
            base_text: base_text.into(),
            stm_suffix_text: stm_suffix_text.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn temperature() -> Self {
        Self::new(Task::Temperature, TEMPERATURE_BASE, DEFAULT_STM_SUFFIX)
            .expect("built-in template")
    }

    pub fn traffic() -> Self {
        Self::new(Task::Traffic, TRAFFIC_BASE, DEFAULT_STM_SUFFIX).expect("built-in template")
    }

    pub fn custom(base_text: impl Into<String>) -> Result<Self> {
        Self::new(Task::Custom, base_text, DEFAULT_STM_SUFFIX)
    }

    /// Built-in template for `task`; `custom` has none.
    pub fn builtin(task: Task) -> Option<Self> {
        match task {
            Task::Temperature => Some(Self::temperature()),
            Task::Traffic => Some(Self::traffic()),
            Task::Custom => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = count_slot(&self.base_text, SEQUENCE_SLOT);
        if n != 1 {
            return Err(Error::Template(format!(
                "base text must contain exactly one {SEQUENCE_SLOT} slot, found {n}"
            )));
        }
        if self.base_text.contains('\n') {
            return Err(Error::Template("base text must be a single line".into()));
        }
        let n = count_slot(&self.stm_suffix_text, PATTERN_SLOT);
        if n != 1 {
            return Err(Error::Template(format!(
                "suffix text must contain exactly one {PATTERN_SLOT} slot, found {n}"
            )));
        }
        if count_slot(&self.stm_suffix_text, LEGEND_SLOT) > 1 {
            return Err(Error::Template(format!(
                "suffix text repeats {LEGEND_SLOT}"
            )));
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn base_text(&self) -> &str {
        &self.base_text
    }

    pub fn stm_suffix_text(&self) -> &str {
        &self.stm_suffix_text
    }
}

/// Rounds the shortest decimal representation of `value` half away from zero.
fn round_half_up(value: f64, decimals: usize) -> String {
    let repr = format!("{}", value.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    digits.extend((0..decimals).map(|i| frac.get(i).copied().unwrap_or(0)));
    if frac.get(decimals).is_some_and(|&d| d >= 5) {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split_at = digits.len() - decimals;
    debug_assert!(split_at >= int_len);
    let mut out = String::with_capacity(digits.len() + 2);
    if value.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..split_at].iter().map(|&d| (b'0' + d) as char));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[split_at..].iter().map(|&d| (b'0' + d) as char));
    }
    out
}

/// Fixed-point rendering joined by `", "`, independent of locale.
pub fn render_sequence(values: &[f64], decimals: usize) -> String {
    values
        .iter()
        .map(|&v| round_half_up(v, decimals))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Legend listing each label with its level name.
pub fn legend(quantizer: &Quantizer) -> String {
    let k = quantizer.k();
    quantizer
        .labels()
        .iter()
        .enumerate()
        .map(|(i, label)| {
            if k == FIVE_LEVEL_NAMES.len() {
                format!("{label}={}", FIVE_LEVEL_NAMES[i])
            } else {
                format!("{label}=level {} of {k}", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// One-line description of the largest level shift in a pattern.
pub fn describe_transitions(pattern: &str, quantizer: &Quantizer) -> Result<String> {
    let seq = quantizer.parse_pattern(pattern)?;
    if seq.len() < 2 {
        return Ok("no level shift is observed".into());
    }
    let transitions = seq.transitions()?;
    let largest = transitions.deltas().iter().copied().fold(0i32, |best, d| {
        if d.abs() > best.abs() {
            d
        } else {
            best
        }
    });
    if largest == 0 {
        return Ok("no level shift is observed".into());
    }
    let strength = if 2 * largest.unsigned_abs() as usize >= quantizer.max_distance() {
        "strong"
    } else {
        "mild"
    };
    let direction = if largest > 0 { "upward" } else { "downward" };
    Ok(format!("{strength} {direction} shift is observed"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub base_prompt: String,
    pub stm_prompt: String,
    pub pattern: String,
    pub window_ref: usize,
}

/// Renders prompts from a template with fixed formatting options.
#[derive(Debug, Clone)]
pub struct PromptRenderer {
    template: PromptTemplate,
    decimals: usize,
    describe_transitions: bool,
}

impl PromptRenderer {
    pub fn new(template: PromptTemplate) -> Self {
        Self {
            template,
            decimals: DEFAULT_DECIMALS,
            describe_transitions: false,
        }
    }

    pub fn with_decimals(mut self, decimals: usize) -> Self {
        self.decimals = decimals;
        self
    }

    /// Appends a verbal description of the largest shift after the pattern.
    pub fn with_transition_description(mut self, enabled: bool) -> Self {
        self.describe_transitions = enabled;
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn decimals(&self) -> usize {
        self.decimals
    }

    pub fn base_prompt(&self, history: &[f64]) -> Result<String> {
        if history.is_empty() {
            return Err(Error::InsufficientData(
                "cannot render an empty window".into(),
            ));
        }
        self.template.validate()?;
        Ok(self
            .template
            .base_text
            .replace(SEQUENCE_SLOT, &render_sequence(history, self.decimals)))
    }

    pub fn suffix(&self, pattern: &str, quantizer: &Quantizer) -> Result<String> {
        let mut suffix = self
            .template
            .stm_suffix_text
            .replace(LEGEND_SLOT, &legend(quantizer))
            .replace(PATTERN_SLOT, pattern);
        if self.describe_transitions {
            suffix.push_str(SUFFIX_SEPARATOR);
            suffix.push_str(&describe_transitions(pattern, quantizer)?);
        }
        Ok(suffix)
    }

    pub fn stm_prompt(
        &self,
        history: &[f64],
        pattern: &str,
        quantizer: &Quantizer,
    ) -> Result<String> {
        let pattern_len = pattern.chars().count();
        if pattern_len != history.len() {
            return Err(Error::Consistency(format!(
                "pattern has {pattern_len} symbols but the window has {} values",
                history.len()
            )));
        }
        let mut prompt = self.base_prompt(history)?;
        prompt.push_str(SUFFIX_SEPARATOR);
        prompt.push_str(&self.suffix(pattern, quantizer)?);
        Ok(prompt)
    }

    pub fn bundle(
        &self,
        history: &[f64],
        quantizer: &Quantizer,
        window_ref: usize,
    ) -> Result<PromptBundle> {
        let pattern = quantizer.pattern_string(&quantizer.encode(history)?)?;
        Ok(PromptBundle {
            base_prompt: self.base_prompt(history)?,
            stm_prompt: self.stm_prompt(history, &pattern, quantizer)?,
            pattern,
            window_ref,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateOverride {
    base_text: Option<String>,
    stm_suffix_text: Option<String>,
}

/// Template overrides loaded from a JSON object keyed by task name, e.g.
/// `{"traffic": {"stm_suffix_text": "Pattern: {pattern}"}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateOverrides {
    entries: BTreeMap<Task, TemplateOverride>,
}

impl TemplateOverrides {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, TemplateOverride> =
            serde_json::from_str(text).map_err(|e| Error::Template(e.to_string()))?;
        let entries = raw
            .into_iter()
            .map(|(name, o)| Ok((name.parse::<Task>()?, o)))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read templates {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Built-in template for `task` with any override applied.
    pub fn resolve(&self, task: Task) -> Result<PromptTemplate> {
        let builtin = PromptTemplate::builtin(task);
        let o = self.entries.get(&task).cloned().unwrap_or_default();
        let base_text = o
            .base_text
            .or_else(|| builtin.as_ref().map(|t| t.base_text.clone()))
            .ok_or_else(|| {
                Error::Template(format!("task '{}' needs a base_text override", task.name()))
            })?;
        let suffix = o
            .stm_suffix_text
            .unwrap_or_else(|| DEFAULT_STM_SUFFIX.to_string());
        PromptTemplate::new(task, base_text, suffix)
    }
}
