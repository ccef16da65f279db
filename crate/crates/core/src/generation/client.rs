use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::PromptRequest;
use crate::record::{decode_record, encode_record, DecodeMode, ReasoningTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, backoff_base_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first one.
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let factor = 1u64.checked_shl(attempt - 2).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env_var: String,
    pub max_concurrent: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Passed through unchanged when set.
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Default for GeneratorEndpoint {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "internvl".into(),
            api_key_env_var: "REASFORGE_API_KEY".into(),
            max_concurrent: 8,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            temperature: None,
            max_tokens: None,
        }
    }
}

impl GeneratorEndpoint {
    pub fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env_var).ok().filter(|k| !k.is_empty())
    }
}

/// Body of one chat-completions call: the prompt as a text part followed by
/// one image part per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub body: Value,
}

impl ChatRequest {
    pub fn new(request: &PromptRequest, endpoint: &GeneratorEndpoint) -> Self {
        let mut content = vec![json!({"type": "text", "text": request.prompt_text})];
        content.extend(request.frame_refs.iter().map(|f| json!({"type": "image_url", "image_url": {"url": f}})));
        let mut body = json!({
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": content}],
        });
        if let Some(t) = endpoint.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = endpoint.max_tokens {
            body["max_tokens"] = json!(m);
        }
        Self { body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("network: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl TransportError {
    fn is_auth(&self) -> bool {
        matches!(self, TransportError::Status { code: 401 | 403, .. })
    }

    fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 408 || *code == 429 || *code >= 500,
            TransportError::Network(_) => true,
            TransportError::Malformed(_) => false,
        }
    }
}

/// Sends a chat request and returns the assistant message text.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct EchoTransport {
    pub reply: String,
}

impl ChatTransport for EchoTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        Ok(self.reply.clone())
    }
}

/// Blocking HTTP transport for OpenAI-compatible servers.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &GeneratorEndpoint) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, url: endpoint.chat_url(), api_key: endpoint.api_key() }
    }
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(&request.body).expect("request body serializes");
        let mut response = call.send(&payload[..]).map_err(|e| TransportError::Network(e.to_string()))?;
        let code = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&code) {
            let mut body = text;
            body.truncate(512);
            return Err(TransportError::Status { code, body });
        }
        parse_chat_response(&text)
    }
}

/// Extracts `choices[0].message.content` (string or text parts).
pub fn parse_chat_response(text: &str) -> Result<String, TransportError> {
    let v: Value = serde_json::from_str(text).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => Err(TransportError::Malformed("missing choices[0].message.content".into())),
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("endpoint rejected credentials: {0}")]
    Auth(TransportError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationReport {
    /// Attempts made per sample during this run.
    pub attempts: BTreeMap<String, u32>,
    /// Samples whose requests failed after retries, with the last error.
    pub failures: BTreeMap<String, String>,
    /// Samples skipped because the checkpoint already had them.
    pub resumed: usize,
}

pub struct GenerateJob<'a> {
    pub requests: &'a [PromptRequest],
    pub generator_id: &'a str,
    pub out: &'a Path,
    pub checkpoint: &'a Path,
    pub resume: bool,
}

enum Outcome {
    Done { index: usize, trace: ReasoningTrace, attempts: u32, error: Option<String> },
    Auth(TransportError),
}

fn call_with_retry(
    transport: &dyn ChatTransport,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> (Result<String, TransportError>, u32) {
    let max = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        std::thread::sleep(policy.delay_before(attempt));
        match transport.send(request) {
            Ok(text) => return (Ok(text), attempt),
            Err(e) if e.is_retryable() && attempt < max => {
                log::warn!("attempt {attempt}/{max} failed: {e}");
            }
            Err(e) => return (Err(e), attempt),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointLine {
    sample_id: String,
}

fn read_checkpoint(path: &Path) -> std::io::Result<HashSet<String>> {
    let mut ids = HashSet::new();
    if !path.exists() {
        return Ok(ids);
    }
    for line in BufReader::new(File::open(path)?).lines() {
        if let Ok(c) = serde_json::from_str::<CheckpointLine>(&line?) {
            ids.insert(c.sample_id);
        }
    }
    Ok(ids)
}

/// Traces already on disk for checkpointed ids. Partial trailing lines from
/// an interrupted run are ignored.
fn read_completed(out: &Path, done: &HashSet<String>) -> std::io::Result<HashMap<String, ReasoningTrace>> {
    let mut traces = HashMap::new();
    if !out.exists() {
        return Ok(traces);
    }
    for line in BufReader::new(File::open(out)?).lines() {
        let line = line?;
        if let Ok(t) = decode_record::<ReasoningTrace>(&line, 0, DecodeMode::Strict) {
            if done.contains(&t.sample_id) {
                traces.insert(t.sample_id.clone(), t);
            }
        }
    }
    Ok(traces)
}

/// Collects one trace per request.
///
/// Up to `endpoint.max_concurrent` requests are in flight. Retryable
/// failures (429, 5xx, network) back off exponentially; a request that
/// still fails becomes a trace with empty `raw_text`. Rejected credentials
/// abort the run. Each finished trace is appended to `job.out` and its id to
/// `job.checkpoint` by a single writer, so an interrupted run can resume
/// without re-requesting finished samples. On success `job.out` is rewritten
/// in request order.
pub fn generate(
    job: &GenerateJob<'_>,
    endpoint: &GeneratorEndpoint,
    transport: &dyn ChatTransport,
) -> Result<GenerationReport, GenerateError> {
    let io_err = |path: &Path| {
        let p = path.display().to_string();
        move |source| GenerateError::Io { path: p, source }
    };
    let mut report = GenerationReport::default();
    let mut completed = if job.resume {
        let ids = read_checkpoint(job.checkpoint).map_err(io_err(job.checkpoint))?;
        read_completed(job.out, &ids).map_err(io_err(job.out))?
    } else {
        HashMap::new()
    };
    let pending: Vec<usize> =
        (0..job.requests.len()).filter(|&i| !completed.contains_key(&job.requests[i].sample_id)).collect();
    report.resumed = job.requests.len() - pending.len();

    // Rewrite the store with only the recovered traces so stale or partial
    // lines do not survive.
    {
        let mut w = BufWriter::new(File::create(job.out).map_err(io_err(job.out))?);
        let mut c = BufWriter::new(File::create(job.checkpoint).map_err(io_err(job.checkpoint))?);
        for r in job.requests {
            if let Some(t) = completed.get(&r.sample_id) {
                writeln!(w, "{}", encode_record(t)).map_err(io_err(job.out))?;
                writeln!(c, "{}", serde_json::to_string(&CheckpointLine { sample_id: t.sample_id.clone() }).unwrap())
                    .map_err(io_err(job.checkpoint))?;
            }
        }
        w.flush().map_err(io_err(job.out))?;
        c.flush().map_err(io_err(job.checkpoint))?;
    }

    let mut out = OpenOptions::new().append(true).open(job.out).map_err(io_err(job.out))?;
    let mut checkpoint = OpenOptions::new().append(true).open(job.checkpoint).map_err(io_err(job.checkpoint))?;

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = endpoint.max_concurrent.max(1).min(pending.len().max(1));
    let mut auth_failure = None;

    std::thread::scope(|scope| -> Result<(), GenerateError> {
        let (tx, rx) = mpsc::channel::<Outcome>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, pending) = (&next, &abort, &pending);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&index) = pending.get(slot) else {
                    break;
                };
                let request = &job.requests[index];
                let chat = ChatRequest::new(request, endpoint);
                let (result, attempts) = call_with_retry(transport, &chat, &endpoint.retry);
                let outcome = match result {
                    Ok(text) => Outcome::Done {
                        index,
                        trace: ReasoningTrace::unscored(&request.sample_id, text, job.generator_id),
                        attempts,
                        error: None,
                    },
                    Err(e) if e.is_auth() => {
                        abort.store(true, Ordering::SeqCst);
                        Outcome::Auth(e)
                    }
                    Err(e) => Outcome::Done {
                        index,
                        trace: ReasoningTrace::unscored(&request.sample_id, "", job.generator_id),
                        attempts,
                        error: Some(e.to_string()),
                    },
                };
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for outcome in rx {
            match outcome {
                Outcome::Done { index, trace, attempts, error } => {
                    let id = job.requests[index].sample_id.clone();
                    writeln!(out, "{}", encode_record(&trace)).and_then(|_| out.flush()).map_err(io_err(job.out))?;
                    writeln!(
                        checkpoint,
                        "{}",
                        serde_json::to_string(&CheckpointLine { sample_id: id.clone() }).unwrap()
                    )
                    .and_then(|_| checkpoint.flush())
                    .map_err(io_err(job.checkpoint))?;
                    report.attempts.insert(id.clone(), attempts);
                    if let Some(e) = error {
                        log::warn!("sample {id} failed after {attempts} attempt(s): {e}");
                        report.failures.insert(id.clone(), e);
                    }
                    completed.insert(id, trace);
                }
                Outcome::Auth(e) => {
                    auth_failure.get_or_insert(e);
                }
            }
        }
        Ok(())
    })?;

    if let Some(e) = auth_failure {
        return Err(GenerateError::Auth(e));
    }

    let tmp = job.out.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in job.requests {
            let t = &completed[&r.sample_id];
            writeln!(w, "{}", encode_record(t)).map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, job.out).map_err(io_err(job.out))?;
    Ok(report)
}
