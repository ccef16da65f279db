//! Corpus and model statistics.
//!
//! Generator accuracy counts Unclassifiable traces as wrong: an answer that
//! cannot be scored is not a correct answer. Counting runs as a map-reduce
//! over shards; merges add integers, so the result does not depend on the
//! shard count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetManifest;
use crate::record::{Classification, RawSample, ReasoningTrace, RefinedTrace};
use crate::refine::{classify_prediction, index_samples, JoinError, RefineStats};
use crate::toytrain::{encode_samples, model::argmax, Tokenizer, ToyModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub total: usize,
    pub correct: usize,
}

impl CategoryCount {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: CategoryCount) {
        self.total += other.total;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub sentences_removed_per_pattern: BTreeMap<usize, usize>,
    pub traces_fully_emptied: usize,
    pub scrub_events: usize,
}

impl From<&RefineStats> for RefinementSummary {
    fn from(s: &RefineStats) -> Self {
        Self {
            sentences_removed_per_pattern: s.sentences_removed_per_pattern.clone(),
            traces_fully_emptied: s.traces_fully_emptied,
            scrub_events: s.scrub_events,
        }
    }
}

impl RefinementSummary {
    pub fn from_refined(refined: &[RefinedTrace]) -> Self {
        let mut stats = RefineStats::default();
        refined.iter().for_each(|r| stats.record(r));
        Self::from(&stats)
    }
}

/// Classification counts for a corpus. `correct + incorrect +
/// unclassifiable == total`; samples without a category are absent from
/// `per_category`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub unclassifiable: usize,
    pub per_category: BTreeMap<String, CategoryCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementSummary>,
}

impl CorpusStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn record(&mut self, class: Classification, category: Option<&str>) {
        self.total += 1;
        match class {
            Classification::Correct => self.correct += 1,
            Classification::Incorrect => self.incorrect += 1,
            Classification::Unclassifiable => self.unclassifiable += 1,
        }
        if let Some(c) = category {
            let entry = self.per_category.entry(c.to_string()).or_default();
            entry.add(CategoryCount { total: 1, correct: usize::from(class == Classification::Correct) });
        }
    }

    /// Adds the counts of `other`. Refinement summaries are not merged.
    pub fn merge(&mut self, other: CorpusStats) {
        self.total += other.total;
        self.correct += other.correct;
        self.incorrect += other.incorrect;
        self.unclassifiable += other.unclassifiable;
        for (k, v) in other.per_category {
            self.per_category.entry(k).or_default().add(v);
        }
    }

    pub fn with_refinement(mut self, refinement: RefinementSummary) -> Self {
        self.refinement = Some(refinement);
        self
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Join(#[from] JoinError),
}

const MIN_SHARD: usize = 4096;

/// Classification counts of `traces` against their samples. The class is
/// recomputed from `predicted_index`, so unscored traces count as
/// Unclassifiable.
pub fn generator_accuracy(traces: &[ReasoningTrace], samples: &[RawSample]) -> Result<CorpusStats, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let by_id = index_samples(samples);
    let orphans: Vec<String> =
        traces.iter().filter(|t| !by_id.contains_key(t.sample_id.as_str())).map(|t| t.sample_id.clone()).collect();
    if !orphans.is_empty() {
        return Err(JoinError { orphans }.into());
    }
    let shard = |chunk: &[ReasoningTrace]| {
        let mut stats = CorpusStats::default();
        for t in chunk {
            let s = by_id[t.sample_id.as_str()];
            stats.record(classify_prediction(t.predicted_index, s.gold_index), s.category.as_deref());
        }
        stats
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let size = traces.len().div_ceil(workers).max(MIN_SHARD);
    let parts: Vec<CorpusStats> = std::thread::scope(|scope| {
        let handles: Vec<_> = traces.chunks(size).map(|c| scope.spawn(move || shard(c))).collect();
        handles.into_iter().map(|h| h.join().expect("stats shard panicked")).collect()
    });
    let mut total = CorpusStats::default();
    parts.into_iter().for_each(|p| total.merge(p));
    Ok(total)
}

/// Model accuracy overall and per category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: CategoryCount,
    pub per_category: BTreeMap<String, CategoryCount>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }
}

/// Evaluates arg-max answers restricted to each sample's options; ties go
/// to the lowest option index.
pub fn eval_model(model: &ToyModel, tokenizer: &Tokenizer, samples: &[RawSample]) -> EvalReport {
    let mut report = EvalReport::default();
    for (s, ex) in samples.iter().zip(encode_samples(samples, tokenizer)) {
        let h = model.hidden_state(&ex.x);
        let hit = CategoryCount { total: 1, correct: usize::from(argmax(&model.qa_logits(&h, ex.k)) == ex.gold) };
        report.overall.add(hit);
        if let Some(c) = &s.category {
            report.per_category.entry(c.clone()).or_default().add(hit);
        }
    }
    report
}

#[derive(Debug, Error)]
#[error("{} eval sample(s) were used for training, e.g. {}", .0.len(), .0[0])]
pub struct OverlapError(pub Vec<String>);

/// Fails when any eval sample id matches a training digest in `manifest`.
pub fn check_disjoint(manifest: &DatasetManifest, samples: &[RawSample]) -> Result<(), OverlapError> {
    let overlap = manifest.overlapping(samples.iter().map(|s| s.sample_id.as_str()));
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(OverlapError(overlap.into_iter().map(String::from).collect()))
    }
}

/// Rounds to 4 decimals for machine-readable output.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Serialize)]
struct RatioJson {
    total: usize,
    correct: usize,
    accuracy: f64,
}

impl From<CategoryCount> for RatioJson {
    fn from(c: CategoryCount) -> Self {
        Self { total: c.total, correct: c.correct, accuracy: round4(c.accuracy()) }
    }
}

/// JSON form of corpus statistics with accuracies at 4 decimals.
pub fn stats_json(stats: &CorpusStats) -> serde_json::Value {
    let per_category: BTreeMap<&str, RatioJson> =
        stats.per_category.iter().map(|(k, v)| (k.as_str(), RatioJson::from(*v))).collect();
    let mut v = serde_json::json!({
        "total": stats.total,
        "correct": stats.correct,
        "incorrect": stats.incorrect,
        "unclassifiable": stats.unclassifiable,
        "accuracy": round4(stats.accuracy()),
        "per_category": per_category,
    });
    if let Some(r) = &stats.refinement {
        v["refinement"] = serde_json::to_value(r).expect("plain data");
    }
    v
}

pub fn eval_json(report: &EvalReport) -> serde_json::Value {
    let per_category: BTreeMap<&str, RatioJson> =
        report.per_category.iter().map(|(k, v)| (k.as_str(), RatioJson::from(*v))).collect();
    serde_json::json!({ "overall": RatioJson::from(report.overall), "per_category": per_category })
}

/// Left-aligned label column, right-aligned numbers, accuracy as a
/// percentage with one decimal.
fn table(rows: &[(String, CategoryCount)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max("category".len());
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "category", "total", "correct", "acc(%)");
    for (k, c) in rows {
        writeln!(out, "{k:<width$}  {:>8}  {:>8}  {:>8.1}", c.total, c.correct, 100.0 * c.accuracy()).unwrap();
    }
    out
}

pub fn stats_table(stats: &CorpusStats) -> String {
    let mut rows: Vec<(String, CategoryCount)> = stats.per_category.iter().map(|(k, v)| (k.clone(), *v)).collect();
    rows.push(("all".into(), CategoryCount { total: stats.total, correct: stats.correct }));
    let mut out = table(&rows);
    writeln!(out, "incorrect {}  unclassifiable {}", stats.incorrect, stats.unclassifiable).unwrap();
    if let Some(r) = &stats.refinement {
        let per: Vec<String> = r.sentences_removed_per_pattern.iter().map(|(p, n)| format!("#{p}:{n}")).collect();
        writeln!(out, "removed sentences {}", if per.is_empty() { "none".into() } else { per.join(" ") }).unwrap();
        writeln!(out, "fully emptied {}  scrub events {}", r.traces_fully_emptied, r.scrub_events).unwrap();
    }
    out
}

pub fn eval_table(report: &EvalReport) -> String {
    let mut rows: Vec<(String, CategoryCount)> = report.per_category.iter().map(|(k, v)| (k.clone(), *v)).collect();
    rows.push(("all".into(), report.overall));
    table(&rows)
}
