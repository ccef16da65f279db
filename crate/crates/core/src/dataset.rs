//! Single-task and multi-task dataset emission.
//!
//! Five supervision modes are supported:
//!
//! | mode      | per covered sample                                  |
//! |-----------|-----------------------------------------------------|
//! | `StlQa`   | one joint example, answer only                      |
//! | `StlCr`   | one joint example `reasoning + "\n###Answer: " + answer`, Correct traces only |
//! | `StlAll`  | as `StlCr`, every trace                             |
//! | `MtlCr`   | a `Qa` example plus a `Reasoning` example, Correct traces only |
//! | `MtlAll`  | as `MtlCr`, every trace                             |
//!
//! Every sample always yields answer supervision; only the reasoning part
//! depends on coverage. Correct traces can be subsampled by `cr_fraction`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{
    self, Classification, DecodeError, DecodeMode, LossWeights, RawSample, ReasoningTrace, RefinedTrace, Task,
    TrainingExample, ValidationError,
};
use crate::rng::SplitMix64;
use crate::text::lettered_options;

/// Separator between reasoning and answer in joint targets.
pub const JOINT_SEPARATOR: &str = "\n###Answer: ";
pub const VIDEO_TOKEN: &str = "<video>";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    StlQa,
    StlCr,
    StlAll,
    MtlCr,
    MtlAll,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::StlQa, Mode::StlCr, Mode::StlAll, Mode::MtlCr, Mode::MtlAll];

    pub fn is_multi_task(self) -> bool {
        matches!(self, Mode::MtlCr | Mode::MtlAll)
    }

    fn correct_only(self) -> bool {
        matches!(self, Mode::StlCr | Mode::MtlCr)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::StlQa => "stl-qa",
            Mode::StlCr => "stl-cr",
            Mode::StlAll => "stl-all",
            Mode::MtlCr => "mtl-cr",
            Mode::MtlAll => "mtl-all",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasoningSource {
    Original,
    Refined,
}

impl std::str::FromStr for ReasoningSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Self::Original),
            "refined" => Ok(Self::Refined),
            _ => Err(format!("unknown reasoning source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub mode: Mode,
    pub cr_fraction: f64,
    pub reasoning_source: ReasoningSource,
    pub seed: u64,
    pub weights: LossWeights,
    /// STL CR/All modes only: omit samples that have no usable reasoning
    /// instead of emitting their answer-only form.
    pub drop_uncovered: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            mode: Mode::MtlAll,
            cr_fraction: 1.0,
            reasoning_source: ReasoningSource::Refined,
            seed: 0,
            weights: LossWeights::BALANCED,
            drop_uncovered: false,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.cr_fraction > 0.0 && self.cr_fraction <= 1.0) {
            return Err(ValidationError::new("cr_fraction", format!("{} not in (0, 1]", self.cr_fraction)));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub total_samples: usize,
    pub cr_count: usize,
    pub ir_count: usize,
    pub unclassifiable_count: usize,
    /// Correct traces kept after `cr_fraction` subsampling.
    pub cr_selected: usize,
    pub covered_samples: usize,
    /// Examples carrying answer supervision (`Qa` and joint examples).
    pub qa_examples: usize,
    /// Examples carrying reasoning supervision (`Reasoning` examples and
    /// joint examples with a non-empty reasoning part).
    pub reasoning_examples: usize,
    pub total_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceDigests {
    pub samples: String,
    pub traces: String,
    pub refined: String,
    pub train: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: Mode,
    pub cr_fraction: f64,
    pub reasoning_source: ReasoningSource,
    pub seed: u64,
    pub weights: LossWeights,
    pub drop_uncovered: bool,
    pub counts: DatasetCounts,
    pub digests: SourceDigests,
    /// Sorted short digests of every sample id in the dataset, for
    /// train/eval overlap checks.
    pub sample_id_digests: Vec<String>,
}

impl DatasetManifest {
    pub fn config(&self) -> BuildConfig {
        BuildConfig {
            mode: self.mode,
            cr_fraction: self.cr_fraction,
            reasoning_source: self.reasoning_source,
            seed: self.seed,
            weights: self.weights,
            drop_uncovered: self.drop_uncovered,
        }
    }

    /// Sample ids of `ids` that also appear in this dataset.
    pub fn overlapping<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
        let known: HashSet<&str> = self.sample_id_digests.iter().map(String::as_str).collect();
        ids.into_iter().filter(|id| known.contains(sample_id_digest(id).as_str())).collect()
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid build config: {0}")]
    Config(#[from] ValidationError),
    #[error(transparent)]
    Join(#[from] crate::refine::JoinError),
    #[error("no Correct traces to sample from")]
    EmptyInput,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(serde_json::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("manifest does not match {TRAIN_FILE}: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot sample from an empty set")]
pub struct EmptyInput;

/// Number of items kept for a fraction: `ceil(fraction * count)`, so any
/// positive fraction keeps at least one item.
pub fn subset_size(count: usize, fraction: f64) -> usize {
    let raw = (fraction * count as f64).ceil() as usize;
    // Guard against 0.1 * 30 = 3.0000000000000004 style rounding.
    let exact = fraction * count as f64;
    let adjusted = if (exact - exact.round()).abs() < 1e-9 { exact.round() as usize } else { raw };
    adjusted.min(count)
}

/// Seeded Fisher–Yates shuffle, then the first `ceil(fraction * n)` items.
pub fn sample_cr_subset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>, EmptyInput> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction {fraction} not in (0, 1]");
    if items.is_empty() {
        return Err(EmptyInput);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let n = subset_size(items.len(), fraction);
    Ok(order[..n].iter().map(|&i| items[i].clone()).collect())
}

/// Model input for a sample; identical for every task of the sample.
pub fn render_input(sample: &RawSample) -> String {
    format!("{VIDEO_TOKEN}\nQuestion: {}\nOptions: {}\n", sample.question, lettered_options(&sample.options))
}

/// Joint single-task target; the answer alone when `reasoning` is empty.
pub fn joint_target(reasoning: &str, answer: &str) -> String {
    if reasoning.is_empty() {
        answer.to_string()
    } else {
        format!("{reasoning}{JOINT_SEPARATOR}{answer}")
    }
}

/// Splits a joint target into (reasoning, answer). Answer-only targets give
/// an empty reasoning part.
pub fn split_joint_target(target: &str) -> (&str, &str) {
    match target.rfind(JOINT_SEPARATOR) {
        Some(i) => (&target[..i], &target[i + JOINT_SEPARATOR.len()..]),
        None => ("", target),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 16 hex digits of the SHA-256 of a sample id.
pub fn sample_id_digest(id: &str) -> String {
    sha256_hex(id.as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    pub examples: Vec<TrainingExample>,
    pub manifest: DatasetManifest,
}

/// Builds the examples for `config.mode`. Output follows sample order.
pub fn build(
    samples: &[RawSample],
    traces: &[ReasoningTrace],
    refined: &[RefinedTrace],
    config: &BuildConfig,
) -> Result<BuiltDataset, BuildError> {
    config.validate()?;
    let sample_ids: HashSet<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
    let orphans: Vec<String> = traces
        .iter()
        .map(|t| &t.sample_id)
        .chain(refined.iter().map(|r| &r.sample_id))
        .filter(|id| !sample_ids.contains(id.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !orphans.is_empty() {
        return Err(crate::refine::JoinError { orphans }.into());
    }

    let trace_by_id: HashMap<&str, &ReasoningTrace> = traces.iter().map(|t| (t.sample_id.as_str(), t)).collect();
    let refined_by_id: HashMap<&str, &RefinedTrace> = refined.iter().map(|r| (r.sample_id.as_str(), r)).collect();

    let mut counts = DatasetCounts { total_samples: samples.len(), ..Default::default() };
    let mut correct_ids = Vec::new();
    for s in samples {
        if let Some(t) = trace_by_id.get(s.sample_id.as_str()) {
            match t.classification {
                Classification::Correct => {
                    counts.cr_count += 1;
                    correct_ids.push(s.sample_id.as_str());
                }
                Classification::Incorrect => counts.ir_count += 1,
                Classification::Unclassifiable => counts.unclassifiable_count += 1,
            }
        }
    }

    let reasoning_for = |id: &str| -> Option<String> {
        match config.reasoning_source {
            ReasoningSource::Refined => refined_by_id.get(id).map(|r| r.refined_text.clone()),
            ReasoningSource::Original => trace_by_id.get(id).map(|t| t.raw_text.trim().to_string()),
        }
    };

    let mut covered: HashSet<&str> = HashSet::new();
    if config.mode != Mode::StlQa {
        let selected = if correct_ids.is_empty() {
            if config.mode.correct_only() {
                return Err(BuildError::EmptyInput);
            }
            Vec::new()
        } else {
            sample_cr_subset(&correct_ids, config.cr_fraction, config.seed).expect("non-empty")
        };
        counts.cr_selected = selected.len();
        covered.extend(selected);
        if !config.mode.correct_only() {
            covered.extend(
                traces.iter().filter(|t| t.classification != Classification::Correct).map(|t| t.sample_id.as_str()),
            );
        }
    }

    let mut examples = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        let id = s.sample_id.as_str();
        let input_text = render_input(s);
        let gold = s.gold_text().to_string();
        let reasoning = if covered.contains(id) { reasoning_for(id).filter(|r| !r.is_empty()) } else { None };
        if reasoning.is_some() {
            counts.covered_samples += 1;
        }
        let example = |task, target_text| TrainingExample {
            sample_id: s.sample_id.clone(),
            task,
            input_text: input_text.clone(),
            target_text,
        };
        match config.mode {
            Mode::StlQa => examples.push(example(Task::StlJoint, gold)),
            Mode::StlCr | Mode::StlAll => match reasoning {
                Some(r) => examples.push(example(Task::StlJoint, joint_target(&r, &gold))),
                None if config.drop_uncovered => {}
                None => examples.push(example(Task::StlJoint, gold)),
            },
            Mode::MtlCr | Mode::MtlAll => {
                examples.push(example(Task::Qa, gold));
                if let Some(r) = reasoning {
                    examples.push(example(Task::Reasoning, r));
                }
            }
        }
    }

    let (qa, rea) = count_supervision(&examples);
    counts.qa_examples = qa;
    counts.reasoning_examples = rea;
    counts.total_examples = examples.len();

    let mut id_digests: Vec<String> = examples.iter().map(|e| sample_id_digest(&e.sample_id)).collect();
    id_digests.sort();
    id_digests.dedup();

    let manifest = DatasetManifest {
        mode: config.mode,
        cr_fraction: config.cr_fraction,
        reasoning_source: config.reasoning_source,
        seed: config.seed,
        weights: config.weights,
        drop_uncovered: config.drop_uncovered,
        counts,
        digests: SourceDigests {
            samples: sha256_hex(record::to_jsonl_string(samples).as_bytes()),
            traces: sha256_hex(record::to_jsonl_string(traces).as_bytes()),
            refined: sha256_hex(record::to_jsonl_string(refined).as_bytes()),
            train: sha256_hex(record::to_jsonl_string(&examples).as_bytes()),
        },
        sample_id_digests: id_digests,
    };
    Ok(BuiltDataset { examples, manifest })
}

/// (answer-supervised, reasoning-supervised) example counts.
pub fn count_supervision(examples: &[TrainingExample]) -> (usize, usize) {
    let mut qa = 0;
    let mut rea = 0;
    for e in examples {
        match e.task {
            Task::Qa => qa += 1,
            Task::Reasoning => rea += 1,
            Task::StlJoint => {
                qa += 1;
                if !split_joint_target(&e.target_text).0.is_empty() {
                    rea += 1;
                }
            }
        }
    }
    (qa, rea)
}

/// Writes `train.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &BuiltDataset) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TRAIN_FILE), record::to_jsonl_string(&dataset.examples))?;
    let mut manifest = serde_json::to_string_pretty(&dataset.manifest).expect("manifest serializes");
    manifest.push('\n');
    fs::write(dir.join(MANIFEST_FILE), manifest)
}

/// Loads a dataset directory and checks the manifest against the examples.
pub fn load_dataset(dir: &Path) -> Result<BuiltDataset, LoadError> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| LoadError::Io { path: p, source }
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_text = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text).map_err(LoadError::Manifest)?;
    let train_path = dir.join(TRAIN_FILE);
    let train_bytes = fs::read(&train_path).map_err(io(&train_path))?;
    let examples: Vec<TrainingExample> = record::parse_jsonl(train_bytes.as_slice(), DecodeMode::Strict)?;

    let (qa, rea) = count_supervision(&examples);
    let c = &manifest.counts;
    if qa != c.qa_examples || rea != c.reasoning_examples || examples.len() != c.total_examples {
        return Err(LoadError::Inconsistent(format!(
            "counts qa={qa} reasoning={rea} total={} vs manifest qa={} reasoning={} total={}",
            examples.len(),
            c.qa_examples,
            c.reasoning_examples,
            c.total_examples
        )));
    }
    if sha256_hex(&train_bytes) != manifest.digests.train {
        return Err(LoadError::Inconsistent("train digest mismatch".into()));
    }
    Ok(BuiltDataset { examples, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::ExtractionMethod;

    fn sample(i: usize) -> RawSample {
        RawSample {
            sample_id: format!("s{i:03}"),
            video_ref: format!("v{i}"),
            question: format!("What happens in clip {i}?"),
            options: vec!["The blanket".into(), "The table".into(), "The closet/cabinet".into(), "The clothes".into()],
            gold_index: i % 4,
            category: None,
        }
    }

    fn trace(s: &RawSample, predicted: usize) -> ReasoningTrace {
        ReasoningTrace {
            sample_id: s.sample_id.clone(),
            raw_text: format!("Observation for {}. ###Answer: {}", s.sample_id, (b'A' + predicted as u8) as char),
            predicted_index: Some(predicted),
            extraction_method: ExtractionMethod::MarkerPattern,
            classification: crate::refine::classify_prediction(Some(predicted), s.gold_index),
            generator_id: "t".into(),
        }
    }

    fn refined(s: &RawSample, text: &str) -> RefinedTrace {
        RefinedTrace {
            sample_id: s.sample_id.clone(),
            refined_text: text.into(),
            removed_sentences: vec![],
            scrubbed_tokens: vec![],
        }
    }

    fn cfg(mode: Mode) -> BuildConfig {
        BuildConfig { mode, ..Default::default() }
    }

    #[test]
    fn input_render_format() {
        let mut s = sample(0);
        s.question = "Q?".into();
        s.options = vec!["X".into(), "Y".into()];
        assert_eq!(render_input(&s), "<video>\nQuestion: Q?\nOptions: (A) X (B) Y\n");
    }

    #[test]
    fn subset_counts() {
        let items: Vec<usize> = (0..100).collect();
        assert_eq!(sample_cr_subset(&items, 0.75, 1).unwrap().len(), 75);
        let seven: Vec<usize> = (0..7).collect();
        assert_eq!(sample_cr_subset(&seven, 0.5, 1).unwrap().len(), 4);
        let mut all = sample_cr_subset(&items, 1.0, 9).unwrap();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(sample_cr_subset::<usize>(&[], 0.5, 1), Err(EmptyInput));
    }

    #[test]
    fn joint_target_round_trip() {
        assert_eq!(split_joint_target(&joint_target("r.", "The blanket")), ("r.", "The blanket"));
        assert_eq!(split_joint_target("The blanket"), ("", "The blanket"));
    }

    #[test]
    fn mtl_all_skips_empty_reasoning() {
        let samples: Vec<RawSample> = (0..3).map(sample).collect();
        let traces: Vec<_> = samples.iter().map(|s| trace(s, s.gold_index)).collect();
        let refined = vec![refined(&samples[0], "r0"), refined(&samples[1], ""), refined(&samples[2], "r2")];
        let out = build(&samples, &traces, &refined, &cfg(Mode::MtlAll)).unwrap();
        let qa = out.examples.iter().filter(|e| e.task == Task::Qa).count();
        let rea = out.examples.iter().filter(|e| e.task == Task::Reasoning).count();
        assert_eq!((qa, rea), (3, 2));
        assert_eq!(out.manifest.counts.qa_examples, 3);
        assert_eq!(out.manifest.counts.reasoning_examples, 2);
        for pair in out.examples.windows(2) {
            if pair[0].sample_id == pair[1].sample_id {
                assert_eq!(pair[0].input_text, pair[1].input_text);
            }
        }
    }

    #[test]
    fn stl_cr_uses_answer_only_for_incorrect() {
        let s = sample(0); // gold A
        let t = trace(&s, 2);
        assert_eq!(t.classification, Classification::Incorrect);
        let r = refined(&s, "The individual is standing in front of a wooden cabinet.");
        let samples = vec![s, sample(1)];
        let traces = vec![t, trace(&samples[1], samples[1].gold_index)];
        let refined_all = vec![r, refined(&samples[1], "ok reasoning.")];
        let out = build(&samples, &traces, &refined_all, &cfg(Mode::StlCr)).unwrap();
        assert_eq!(out.examples[0].target_text, "The blanket");
        assert_eq!(out.examples[0].task, Task::StlJoint);
        assert_eq!(out.examples[1].target_text, "ok reasoning.\n###Answer: The table");
        let out = build(&samples, &traces, &refined_all, &cfg(Mode::StlAll)).unwrap();
        assert!(out.examples[0].target_text.ends_with("\n###Answer: The blanket"));
    }

    #[test]
    fn stl_qa_ignores_reasoning() {
        let samples: Vec<RawSample> = (0..4).map(sample).collect();
        let traces: Vec<_> = samples.iter().map(|s| trace(s, 0)).collect();
        let refined: Vec<_> = samples.iter().map(|s| refined(s, "text")).collect();
        let out = build(&samples, &traces, &refined, &cfg(Mode::StlQa)).unwrap();
        assert!(out.examples.iter().zip(&samples).all(|(e, s)| e.target_text == s.gold_text()));
    }

    #[test]
    fn drop_uncovered_only_affects_stl() {
        let samples: Vec<RawSample> = (0..4).map(sample).collect();
        let traces = vec![trace(&samples[0], samples[0].gold_index)];
        let refined = vec![refined(&samples[0], "r")];
        let mut c = cfg(Mode::StlCr);
        c.drop_uncovered = true;
        assert_eq!(build(&samples, &traces, &refined, &c).unwrap().examples.len(), 1);
        c.mode = Mode::MtlCr;
        assert_eq!(build(&samples, &traces, &refined, &c).unwrap().examples.len(), 5);
    }

    #[test]
    fn orphans_and_empty_cr() {
        let samples = vec![sample(0)];
        let ghost = trace(&sample(9), 0);
        assert!(matches!(build(&samples, &[ghost], &[], &cfg(Mode::MtlAll)), Err(BuildError::Join(_))));
        let wrong = trace(&samples[0], 3);
        assert!(matches!(
            build(&samples, std::slice::from_ref(&wrong), &[], &cfg(Mode::MtlCr)),
            Err(BuildError::EmptyInput)
        ));
        assert!(build(&samples, &[wrong], &[], &cfg(Mode::MtlAll)).is_ok());
    }

    #[test]
    fn write_then_load_verifies_counts() {
        let samples: Vec<RawSample> = (0..6).map(sample).collect();
        let traces: Vec<_> = samples.iter().map(|s| trace(s, 1)).collect();
        let refined: Vec<_> = samples.iter().map(|s| refined(s, "some reasoning")).collect();
        let out = build(&samples, &traces, &refined, &cfg(Mode::MtlAll)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &out).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, out);

        let train = dir.path().join(TRAIN_FILE);
        let text = fs::read_to_string(&train).unwrap();
        let truncated: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        fs::write(&train, truncated).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(LoadError::Inconsistent(_))));
    }

    #[test]
    fn overlap_detection() {
        let samples: Vec<RawSample> = (0..3).map(sample).collect();
        let out = build(&samples, &[], &[], &cfg(Mode::StlQa)).unwrap();
        assert_eq!(out.manifest.overlapping(["s001", "zzz"]), vec!["s001"]);
    }
}
