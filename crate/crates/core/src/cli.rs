//! The `reasforge` command.
//!
//! Every stage reads and writes files only, so each one can be rerun on its
//! own. Exit codes: 0 success, 1 invalid input or configuration, 2 I/O or
//! endpoint failure, 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::answer::{RuleTable, RuleTableError};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{build, load_dataset, write_dataset, BuildConfig, BuildError, LoadError, Mode, ReasoningSource};
use crate::generation::{
    self, generate, mock_corpus, GenerateError, GenerateJob, GenerationManifest, HttpTransport, PromptRequest,
    PromptTemplate, MOCK_GENERATOR_ID,
};
use crate::metrics::{self, CorpusStats, MetricsError, OverlapError, RefinementSummary};
use crate::record::{
    read_jsonl, validate_samples, DecodeError, DecodeMode, LossWeights, RawSample, ReasoningTrace, RefinedTrace,
    ValidationError,
};
use crate::refine::{refine_corpus, score_trace, ConclusionPatternSet, JoinError, PatternSetError, RefineOptions};
use crate::toytrain::{
    self, history_csv, read_params, sweep_beta, sweep_csv, write_params, DumpError, TrainConfig, TrainError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "reasforge", version, about = "Curate MLLM reasoning traces for VideoQA and train on them")]
struct Cli {
    /// Pipeline config file (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render generation prompts and frame references as JSONL.
    Prompts(PromptsArgs),
    /// Collect traces from a chat-completions endpoint.
    Generate(GenerateArgs),
    /// Produce seeded mock traces with a fixed error rate.
    MockGenerate(MockArgs),
    /// Extract predicted answers and label traces Correct or Incorrect.
    Classify(ClassifyArgs),
    /// Remove conclusion sentences and, for incorrect traces, gold tokens.
    Refine(RefineArgs),
    /// Emit a single-task or multi-task training dataset.
    Build(BuildArgs),
    /// Generator accuracy and refinement statistics.
    Stats(StatsArgs),
    /// Train the toy model on a dataset.
    Train(TrainArgs),
    /// Train once per beta and report eval accuracy.
    SweepBeta(SweepArgs),
    /// Evaluate a parameter dump on held-out samples.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct FrameArgs {
    /// Frames attached to each request.
    #[arg(long)]
    frames: Option<usize>,
    /// Frames assumed per video.
    #[arg(long)]
    total_frames: Option<usize>,
    /// Prompt template file with {question} and {options} placeholders.
    #[arg(long, value_name = "FILE")]
    template: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptsArgs {
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Output JSONL; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    frames: FrameArgs,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Trace output (JSONL).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Checkpoint file; defaults to `<out>.checkpoint`.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Skip samples already recorded in the checkpoint.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long, value_name = "VAR")]
    api_key_env: Option<String>,
    #[arg(long)]
    max_concurrent: Option<usize>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[command(flatten)]
    frames: FrameArgs,
}

#[derive(Debug, Args)]
struct MockArgs {
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long)]
    error_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Raw traces (JSONL).
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Extraction rule table (TOML).
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Classified traces (JSONL).
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Conclusion pattern file, one pattern per line.
    #[arg(long, value_name = "FILE")]
    patterns: Option<PathBuf>,
    /// Do not refine traces without a parseable answer.
    #[arg(long)]
    exclude_unclassifiable: bool,
    /// Write refinement statistics as JSON.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Classified traces (JSONL).
    #[arg(long, value_name = "FILE")]
    traces: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    refined: Option<PathBuf>,
    /// Output directory for train.jsonl and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// stl-qa, stl-cr, stl-all, mtl-cr or mtl-all.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    cr_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// original or refined.
    #[arg(long)]
    source: Option<ReasoningSource>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Drop samples without usable reasoning in single-task CR/All modes.
    #[arg(long)]
    drop_uncovered: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Classified traces (JSONL).
    #[arg(long, value_name = "FILE")]
    traces: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Refined traces, for refinement statistics.
    #[arg(long, value_name = "FILE")]
    refined: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory written by `build`.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Parameter dump output.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    /// Held-out samples for per-epoch eval accuracy.
    #[arg(long, value_name = "FILE")]
    eval: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Comma-separated betas in [0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    /// CSV output; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    eval: Option<PathBuf>,
    /// Print rows as JSON instead of CSV.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Parameter dump written by `train`.
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Training dataset; eval fails when the samples overlap it.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
    fn invalid(message: impl ToString) -> Self {
        Self { code: EXIT_VALIDATION, message: message.to_string() }
    }
    fn io(message: impl ToString) -> Self {
        Self { code: EXIT_IO, message: message.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        Self::invalid(e)
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Io { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<PatternSetError> for CliError {
    fn from(e: PatternSetError) -> Self {
        match e {
            PatternSetError::Io { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<RuleTableError> for CliError {
    fn from(e: RuleTableError) -> Self {
        match e {
            RuleTableError::Io { .. } => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => Self::io(e),
            LoadError::Decode(d) => d.into(),
            _ => Self::invalid(e),
        }
    }
}

impl From<DumpError> for CliError {
    fn from(e: DumpError) -> Self {
        match e {
            DumpError::Io(_) => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<GenerateError> for CliError {
    fn from(e: GenerateError) -> Self {
        Self::io(e)
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::invalid(e)
            }
        }
    )*};
}

invalid_from!(BuildError, TrainError, JoinError, MetricsError, OverlapError);

type CliResult = Result<(), CliError>;

/// Runs the command line and returns the process exit code. Normal output
/// goes to `stdout`; diagnostics go to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let level = cli.log_level.as_ref().or(config.log_level.as_ref()).map_or("info", String::as_str);
    let level: log::LevelFilter = level.parse().map_err(|_| CliError::usage(format!("unknown log level {level:?}")))?;
    // Dependencies stay at warn: the HTTP client logs full request URLs and
    // raw request bytes at debug/trace, which would expose credentials.
    let _ = env_logger::Builder::new()
        .filter_level(level.min(log::LevelFilter::Warn))
        .filter_module("reasforge", level)
        .target(env_logger::Target::Stderr)
        .try_init();

    match cli.command {
        Command::Prompts(a) => prompts(a, &config, stdout),
        Command::Generate(a) => generate_cmd(a, &config),
        Command::MockGenerate(a) => mock_generate_cmd(a, &config),
        Command::Classify(a) => classify(a, &config),
        Command::Refine(a) => refine_cmd(a, &config),
        Command::Build(a) => build_cmd(a, &config),
        Command::Stats(a) => stats(a, &config, stdout),
        Command::Train(a) => train_cmd(a, &config),
        Command::SweepBeta(a) => sweep(a, &config, stdout),
        Command::Eval(a) => eval(a, &config, stdout),
    }
}

/// Picks the flag, then the config value; fails with a usage error when
/// neither is set.
fn path_arg(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone()).ok_or_else(|| CliError::usage(format!("missing --{name} (no config default)")))
}

/// Resolves an input path and checks that it exists before any work runs.
fn input_arg(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    let path = path_arg(flag, config, name)?;
    if !path.exists() {
        return Err(CliError::io(format!("--{name}: {} does not exist", path.display())));
    }
    Ok(path)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_records<T: crate::record::Record>(path: &Path, records: &[T]) -> CliResult {
    write_file(path, crate::record::to_jsonl_string(records).as_bytes())
}

fn read_samples(path: &Path) -> Result<Vec<RawSample>, CliError> {
    let samples: Vec<RawSample> = read_jsonl(path, DecodeMode::Strict)?;
    validate_samples(&samples)?;
    Ok(samples)
}

fn read_traces(path: &Path) -> Result<Vec<ReasoningTrace>, CliError> {
    Ok(read_jsonl(path, DecodeMode::Strict)?)
}

fn pretty_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn out_io(e: std::io::Error) -> CliError {
    CliError::io(format!("writing output: {e}"))
}

fn template_for(flag: Option<PathBuf>, config: &PipelineConfig) -> Result<PromptTemplate, CliError> {
    match flag.or_else(|| config.generation.template.clone()) {
        Some(path) => PromptTemplate::load(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display()))),
        None => Ok(PromptTemplate::default()),
    }
}

fn prompt_requests(
    samples: &[RawSample],
    frames: FrameArgs,
    config: &PipelineConfig,
) -> Result<(Vec<PromptRequest>, PromptTemplate, usize, usize), CliError> {
    let n = frames.frames.unwrap_or(config.generation.n_frames);
    let total = frames.total_frames.unwrap_or(config.generation.total_frames);
    if n == 0 || total == 0 {
        return Err(CliError::invalid("frame counts must be at least 1"));
    }
    let template = template_for(frames.template, config)?;
    let requests = samples.iter().map(|s| PromptRequest::new(s, &template, total, n)).collect();
    Ok((requests, template, n, total))
}

fn prompts(a: PromptsArgs, config: &PipelineConfig, stdout: &mut dyn Write) -> CliResult {
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let (requests, ..) = prompt_requests(&samples, a.frames, config)?;
    let mut text = String::new();
    for r in &requests {
        text.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        text.push('\n');
    }
    match a.out {
        Some(path) => write_file(&path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(out_io),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn generate_cmd(a: GenerateArgs, config: &PipelineConfig) -> CliResult {
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let out = path_arg(a.out, &config.paths.traces, "out")?;
    let checkpoint = a.checkpoint.unwrap_or_else(|| {
        let mut name = out.file_name().map(OsString::from).unwrap_or_default();
        name.push(".checkpoint");
        out.with_file_name(name)
    });
    let mut endpoint = config.generation.endpoint.clone();
    if let Some(v) = a.base_url {
        endpoint.base_url = v;
    }
    if let Some(v) = a.model {
        endpoint.model_name = v;
    }
    if let Some(v) = a.api_key_env {
        endpoint.api_key_env_var = v;
    }
    if let Some(v) = a.max_concurrent {
        endpoint.max_concurrent = v;
    }
    if let Some(v) = a.max_attempts {
        endpoint.retry.max_attempts = v;
    }
    if let Some(v) = a.timeout_secs {
        endpoint.timeout_secs = v;
    }
    endpoint.temperature = a.temperature.or(endpoint.temperature);
    endpoint.max_tokens = a.max_tokens.or(endpoint.max_tokens);
    if endpoint.api_key().is_none() {
        log::warn!(
            "environment variable {} is not set; sending requests without credentials",
            endpoint.api_key_env_var
        );
    }

    let (requests, template, n_frames, total_frames) = prompt_requests(&samples, a.frames, config)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("{}: {e}", parent.display())))?;
    }
    let generator_id = endpoint.model_name.clone();
    let job = GenerateJob {
        requests: &requests,
        generator_id: &generator_id,
        out: &out,
        checkpoint: &checkpoint,
        resume: a.resume,
    };
    let transport = HttpTransport::new(&endpoint);
    log::info!("requesting {} traces from {}", requests.len(), generation::redact_url(&endpoint.base_url));
    let report = generate(&job, &endpoint, &transport)?;
    let manifest = GenerationManifest {
        generator_id,
        template_version: template.version.clone(),
        template_hash: template.hash(),
        n_frames,
        total_frames,
        endpoint: Some(generation::redact_url(&endpoint.base_url)),
        mock_error_rate: None,
        seed: None,
        requested: requests.len(),
        failed: report.failures.len(),
    };
    write_file(&manifest_path(&out), pretty_json(&manifest).as_bytes())?;
    log::info!("{} traces written, {} resumed, {} failed", requests.len(), report.resumed, report.failures.len());
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::io(format!(
            "{} request(s) failed after retries; rerun with --resume after fixing the endpoint",
            report.failures.len()
        )))
    }
}

fn mock_generate_cmd(a: MockArgs, config: &PipelineConfig) -> CliResult {
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let out = path_arg(a.out, &config.paths.traces, "out")?;
    let error_rate = a.error_rate.unwrap_or(config.generation.mock_error_rate);
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(CliError::invalid(format!("--error-rate {error_rate} not in [0, 1]")));
    }
    let seed = a.seed.unwrap_or(config.generation.seed);
    let traces = mock_corpus(&samples, error_rate, seed);
    write_records(&out, &traces)?;
    let template = PromptTemplate::default();
    let manifest = GenerationManifest {
        generator_id: MOCK_GENERATOR_ID.into(),
        template_version: template.version.clone(),
        template_hash: template.hash(),
        n_frames: config.generation.n_frames,
        total_frames: config.generation.total_frames,
        endpoint: None,
        mock_error_rate: Some(error_rate),
        seed: Some(seed),
        requested: samples.len(),
        failed: 0,
    };
    write_file(&manifest_path(&out), pretty_json(&manifest).as_bytes())?;
    log::info!("{} mock traces written to {}", traces.len(), out.display());
    Ok(())
}

fn rule_table(flag: Option<PathBuf>, config: &PipelineConfig) -> Result<RuleTable, CliError> {
    match flag.or_else(|| config.refine.rules.clone()) {
        Some(path) => Ok(RuleTable::load(&path)?),
        None => Ok(RuleTable::default()),
    }
}

fn classify(a: ClassifyArgs, config: &PipelineConfig) -> CliResult {
    let traces = read_traces(&input_arg(a.input, &config.paths.traces, "in")?)?;
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let out = path_arg(a.out, &None, "out")?;
    let rules = rule_table(a.rules, config)?;
    let by_id = crate::refine::index_samples(&samples);
    let orphans: Vec<String> =
        traces.iter().filter(|t| !by_id.contains_key(t.sample_id.as_str())).map(|t| t.sample_id.clone()).collect();
    if !orphans.is_empty() {
        return Err(JoinError { orphans }.into());
    }
    let scored: Vec<ReasoningTrace> =
        traces.iter().map(|t| score_trace(t, by_id[t.sample_id.as_str()], &rules).expect("joined by id")).collect();
    write_records(&out, &scored)?;
    let stats = metrics::generator_accuracy(&scored, &samples)?;
    log::info!(
        "{} traces: {} correct, {} incorrect, {} unclassifiable",
        stats.total,
        stats.correct,
        stats.incorrect,
        stats.unclassifiable
    );
    Ok(())
}

fn refine_cmd(a: RefineArgs, config: &PipelineConfig) -> CliResult {
    let traces = read_traces(&input_arg(a.input, &config.paths.traces, "in")?)?;
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let out = path_arg(a.out, &config.paths.refined, "out")?;
    let patterns = match a.patterns.or_else(|| config.refine.patterns.clone()) {
        Some(path) => ConclusionPatternSet::load(&path)?,
        None => ConclusionPatternSet::default(),
    };
    let options =
        RefineOptions { include_unclassifiable: config.refine.include_unclassifiable && !a.exclude_unclassifiable };
    let (refined, stats) = refine_corpus(&traces, &samples, &patterns, options)?;
    write_records(&out, &refined)?;
    if let Some(path) = a.stats {
        write_file(&path, pretty_json(&RefinementSummary::from(&stats)).as_bytes())?;
    }
    log::info!(
        "{} traces refined, {} scrubbed, {} emptied, {} skipped",
        stats.traces,
        stats.scrub_events,
        stats.traces_fully_emptied,
        stats.skipped_unclassifiable
    );
    Ok(())
}

fn build_cmd(a: BuildArgs, config: &PipelineConfig) -> CliResult {
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let mut build_config: BuildConfig = config.build;
    if let Some(m) = a.mode {
        build_config.mode = m;
    }
    if let Some(f) = a.cr_fraction {
        build_config.cr_fraction = f;
    }
    if let Some(s) = a.seed {
        build_config.seed = s;
    }
    if let Some(s) = a.source {
        build_config.reasoning_source = s;
    }
    build_config.weights = weights(a.alpha, a.beta, build_config.weights)?;
    build_config.drop_uncovered |= a.drop_uncovered;
    build_config.validate()?;

    // Answer-only mode needs no traces.
    let (traces, refined): (Vec<ReasoningTrace>, Vec<RefinedTrace>) = if build_config.mode == Mode::StlQa {
        (Vec::new(), Vec::new())
    } else {
        let traces = read_traces(&input_arg(a.traces, &config.paths.traces, "traces")?)?;
        let refined = match build_config.reasoning_source {
            ReasoningSource::Refined => {
                read_jsonl(&input_arg(a.refined, &config.paths.refined, "refined")?, DecodeMode::Strict)?
            }
            ReasoningSource::Original => Vec::new(),
        };
        (traces, refined)
    };
    let out = path_arg(a.out, &config.paths.dataset_dir, "out")?;
    let built = build(&samples, &traces, &refined, &build_config)?;
    write_dataset(&out, &built).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
    let c = &built.manifest.counts;
    log::info!(
        "{} examples ({} answer, {} reasoning) written to {}",
        c.total_examples,
        c.qa_examples,
        c.reasoning_examples,
        out.display()
    );
    Ok(())
}

/// Applies `--alpha`/`--beta`; one of them alone sets the other to its
/// complement.
fn weights(alpha: Option<f64>, beta: Option<f64>, base: LossWeights) -> Result<LossWeights, CliError> {
    let w = match (alpha, beta) {
        (None, None) => base,
        (Some(a), Some(b)) => LossWeights::new(a, b)?,
        (Some(a), None) => LossWeights::new(a, 1.0 - a)?,
        (None, Some(b)) => LossWeights::from_beta(b)?,
    };
    Ok(w)
}

fn stats(a: StatsArgs, config: &PipelineConfig, stdout: &mut dyn Write) -> CliResult {
    let traces = read_traces(&input_arg(a.traces, &config.paths.traces, "traces")?)?;
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let mut stats: CorpusStats = metrics::generator_accuracy(&traces, &samples)?;
    if let Some(path) = a.refined {
        if !path.exists() {
            return Err(CliError::io(format!("--refined: {} does not exist", path.display())));
        }
        let refined: Vec<RefinedTrace> = read_jsonl(&path, DecodeMode::Strict)?;
        stats = stats.with_refinement(RefinementSummary::from_refined(&refined));
    }
    let text = if a.json { pretty_json(&metrics::stats_json(&stats)) } else { metrics::stats_table(&stats) };
    stdout.write_all(text.as_bytes()).map_err(out_io)
}

fn train_config(o: &TrainOverrides, base: &TrainConfig) -> TrainConfig {
    let mut c = base.clone();
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.lr {
        c.learning_rate = v;
    }
    if let Some(v) = o.batch {
        c.batch = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.hidden {
        c.hidden = v;
    }
    if let Some(v) = o.init_scale {
        c.init_scale = v;
    }
    if let Some(v) = o.max_vocab {
        c.max_vocab = v;
    }
    c
}

fn load_eval(path: Option<PathBuf>) -> Result<Option<Vec<RawSample>>, CliError> {
    path.map(|p| input_arg(Some(p), &None, "eval").and_then(|p| read_samples(&p))).transpose()
}

fn train_cmd(a: TrainArgs, config: &PipelineConfig) -> CliResult {
    let dir = input_arg(a.dataset, &config.paths.dataset_dir, "dataset")?;
    let mut train_config = train_config(&a.train, &config.train);
    train_config.weights = weights(a.alpha, a.beta, train_config.weights)?;
    train_config.validate()?;
    let eval = load_eval(a.eval)?;
    let data = load_dataset(&dir)?;
    let trained = toytrain::train(&data.examples, &data.manifest, &train_config, eval.as_deref())?;
    let mut bytes = Vec::new();
    write_params(&mut bytes, &trained).map_err(out_io)?;
    write_file(&a.out, &bytes)?;
    if let Some(path) = a.history {
        write_file(&path, history_csv(&trained.history).as_bytes())?;
    }
    if let Some(last) = trained.history.last() {
        log::info!("epoch {}: loss {:.4}, eval accuracy {:.4}", last.epoch, last.loss, last.eval_acc);
    }
    Ok(())
}

fn sweep(a: SweepArgs, config: &PipelineConfig, stdout: &mut dyn Write) -> CliResult {
    let dir = input_arg(a.dataset, &config.paths.dataset_dir, "dataset")?;
    let train_config = train_config(&a.train, &config.train);
    train_config.validate()?;
    for &b in &a.betas {
        LossWeights::from_beta(b)?;
    }
    let eval = load_eval(a.eval)?;
    let data = load_dataset(&dir)?;
    let rows = sweep_beta(&data.examples, &data.manifest, &a.betas, &train_config, eval.as_deref())?;
    if let Some(path) = &a.out {
        write_file(path, sweep_csv(&rows).as_bytes())?;
    }
    let text = if a.json {
        pretty_json(&rows)
    } else if a.out.is_none() {
        sweep_csv(&rows)
    } else {
        String::new()
    };
    stdout.write_all(text.as_bytes()).map_err(out_io)
}

fn eval(a: EvalArgs, config: &PipelineConfig, stdout: &mut dyn Write) -> CliResult {
    let samples = read_samples(&input_arg(a.samples, &config.paths.samples, "samples")?)?;
    let params = input_arg(Some(a.params), &None, "params")?;
    if let Some(dir) = a.dataset.or_else(|| config.paths.dataset_dir.clone()) {
        let data = load_dataset(&dir)?;
        metrics::check_disjoint(&data.manifest, &samples)?;
    } else {
        log::warn!("no --dataset given; train/eval disjointness is not checked");
    }
    let bytes = fs::read(&params).map_err(|e| CliError::io(format!("{}: {e}", params.display())))?;
    let (_, model, tokenizer) = read_params(&mut bytes.as_slice())?;
    let report = metrics::eval_model(&model, &tokenizer, &samples);
    let text = if a.json { pretty_json(&metrics::eval_json(&report)) } else { metrics::eval_table(&report) };
    stdout.write_all(text.as_bytes()).map_err(out_io)
}
