//! Domain records shared by every pipeline stage and their JSON Lines codec.
//!
//! Each record type serializes its keys in declaration order, which is the
//! documented wire order, so decoding and re-encoding a file reproduces it
//! byte for byte.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 8;

/// One multiple-choice VideoQA item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub sample_id: String,
    /// Opaque video identifier; pixels are never read.
    pub video_ref: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold_index: usize,
    #[serde(default)]
    pub category: Option<String>,
}

impl RawSample {
    pub fn gold_text(&self) -> &str {
        &self.options[self.gold_index]
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    MarkerPattern,
    ProsePattern,
    OptionTextMatch,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Correct,
    Incorrect,
    Unclassifiable,
}

/// Raw generator output for one sample, plus the extracted answer and its
/// CR/IR label once the classify stage has run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub sample_id: String,
    pub raw_text: String,
    #[serde(default)]
    pub predicted_index: Option<usize>,
    pub extraction_method: ExtractionMethod,
    pub classification: Classification,
    pub generator_id: String,
}

impl ReasoningTrace {
    /// A trace straight from a generator, before answer extraction.
    pub fn unscored(
        sample_id: impl Into<String>,
        raw_text: impl Into<String>,
        generator_id: impl Into<String>,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            raw_text: raw_text.into(),
            predicted_index: None,
            extraction_method: ExtractionMethod::Unparseable,
            classification: Classification::Unclassifiable,
            generator_id: generator_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedSentence {
    pub sentence: String,
    /// 1-based index into the conclusion pattern set.
    pub pattern_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedTrace {
    pub sample_id: String,
    pub refined_text: String,
    pub removed_sentences: Vec<RemovedSentence>,
    pub scrubbed_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Qa,
    Reasoning,
    StlJoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub sample_id: String,
    pub task: Task,
    pub input_text: String,
    pub target_text: String,
}

/// Task weights of the multi-task objective, `alpha * C_qa + beta * C_rea`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub const QA_ONLY: LossWeights = LossWeights { alpha: 1.0, beta: 0.0 };
    pub const BALANCED: LossWeights = LossWeights { alpha: 0.5, beta: 0.5 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, ValidationError> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    /// Weights with `alpha = 1 - beta`.
    pub fn from_beta(beta: f64) -> Result<Self, ValidationError> {
        Self::new(1.0 - beta, beta)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ValidationError::new("alpha", format!("{} not in (0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(ValidationError::new("beta", format!("{} not in [0, 1)", self.beta)));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-12 {
            return Err(ValidationError::new("beta", format!("alpha + beta = {} (must be 1)", self.alpha + self.beta)));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::BALANCED
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

pub fn validate_sample(sample: &RawSample) -> Result<(), ValidationError> {
    if sample.sample_id.trim().is_empty() {
        return Err(ValidationError::new("sample_id", "empty"));
    }
    let k = sample.options.len();
    if k == 0 {
        return Err(ValidationError::new("options", "no options"));
    }
    if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&k) {
        return Err(ValidationError::new("options", format!("{k} options, expected {MIN_OPTIONS}..={MAX_OPTIONS}")));
    }
    if let Some(i) = sample.options.iter().position(|o| o.trim().is_empty()) {
        return Err(ValidationError::new(format!("options[{i}]"), "empty option text"));
    }
    if sample.gold_index >= k {
        return Err(ValidationError::new("gold_index", format!("{} out of range for {k} options", sample.gold_index)));
    }
    Ok(())
}

/// Checks every sample and that ids are unique across the set.
pub fn validate_samples(samples: &[RawSample]) -> Result<(), ValidationError> {
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples {
        validate_sample(s).map_err(|e| ValidationError::new(e.field, format!("{} ({})", e.reason, s.sample_id)))?;
        if !seen.insert(s.sample_id.as_str()) {
            return Err(ValidationError::new("sample_id", format!("duplicate id {}", s.sample_id)));
        }
    }
    Ok(())
}

/// Wire-format descriptor for a record type.
pub trait Record: Serialize + DeserializeOwned {
    /// Field names in emission order.
    const FIELDS: &'static [&'static str];
    fn key(&self) -> &str;
}

impl Record for RawSample {
    const FIELDS: &'static [&'static str] =
        &["sample_id", "video_ref", "question", "options", "gold_index", "category"];
    fn key(&self) -> &str {
        &self.sample_id
    }
}

impl Record for ReasoningTrace {
    const FIELDS: &'static [&'static str] =
        &["sample_id", "raw_text", "predicted_index", "extraction_method", "classification", "generator_id"];
    fn key(&self) -> &str {
        &self.sample_id
    }
}

impl Record for RefinedTrace {
    const FIELDS: &'static [&'static str] = &["sample_id", "refined_text", "removed_sentences", "scrubbed_tokens"];
    fn key(&self) -> &str {
        &self.sample_id
    }
}

impl Record for TrainingExample {
    const FIELDS: &'static [&'static str] = &["sample_id", "task", "input_text", "target_text"];
    fn key(&self) -> &str {
        &self.sample_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// Unknown top-level keys are an error.
    #[default]
    Strict,
    /// Unknown top-level keys are ignored.
    Lenient,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line {line}: field `{path}`: {message}")]
    Field { line: usize, path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl DecodeError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DecodeError::Field { line, .. } | DecodeError::Syntax { line, .. } => Some(*line),
            DecodeError::Io { .. } => None,
        }
    }
}

/// Encodes one record as a single JSON line (no trailing newline).
pub fn encode_record<T: Record>(record: &T) -> String {
    serde_json::to_string(record).expect("domain records always serialize")
}

/// Decodes one JSON line. `line` is only used for error reporting.
pub fn decode_record<T: Record>(text: &str, line: usize, mode: DecodeMode) -> Result<T, DecodeError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DecodeError::Syntax { line, message: e.to_string() })?;
    let obj =
        value.as_object().ok_or_else(|| DecodeError::Syntax { line, message: "expected a JSON object".into() })?;
    if mode == DecodeMode::Strict {
        if let Some(k) = obj.keys().find(|k| !T::FIELDS.contains(&k.as_str())) {
            return Err(DecodeError::Field { line, path: k.clone(), message: "unknown field".into() });
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // Missing fields surface at the root; name them in the path.
        let path = match (path.as_str(), missing_field(&inner)) {
            (".", Some(f)) => f.to_string(),
            _ => path,
        };
        DecodeError::Field { line, path, message: inner }
    })
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Reads a JSON Lines file. Blank lines are skipped; line numbers are 1-based.
pub fn read_jsonl<T: Record>(path: &Path, mode: DecodeMode) -> Result<Vec<T>, DecodeError> {
    let io_err = |source| DecodeError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    parse_jsonl(BufReader::new(file), mode).map_err(|e| match e {
        DecodeError::Io { source, .. } => io_err(source),
        other => other,
    })
}

pub fn parse_jsonl<T: Record, R: BufRead>(reader: R, mode: DecodeMode) -> Result<Vec<T>, DecodeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DecodeError::Io { path: "<reader>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_record(&line, i + 1, mode)?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Record + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        w.write_all(encode_record(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn to_jsonl_string<'a, T: Record + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&encode_record(r));
        s.push('\n');
    }
    s
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Correct => "correct",
            Classification::Incorrect => "incorrect",
            Classification::Unclassifiable => "unclassifiable",
        })
    }
}
