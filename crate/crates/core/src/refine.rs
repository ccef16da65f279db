//! Correct/Incorrect classification and lexical refinement of traces.
//!
//! Refinement drops every sentence that opens with one of the fixed
//! conclusion patterns, for every trace. Incorrect traces additionally lose
//! each token that carries the gold answer text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::RuleTable;
use crate::record::{Classification, RawSample, ReasoningTrace, RefinedTrace, RemovedSentence};
use crate::text::{answer_words, is_article, normalize_for_match, normalize_token};

/// The ten fixed conclusion openers, in their canonical order. Pattern ids
/// are 1-based positions in this list.
pub const DEFAULT_CONCLUSION_PATTERNS: [&str; 10] = [
    "###Answer:",
    "**Answer**:",
    "###Conclusion:",
    "**Conclusion**:",
    "###Detailed Explanation",
    "The correct answer",
    "Thus, the correct answer is",
    "Therefore, the correct answer is",
    "Based on these observations",
    "Given these observations and the context",
];

/// Normalized pattern that also matches after a comma inside a sentence,
/// e.g. "So, the correct answer is B."
const MID_SENTENCE_PATTERN: &str = "the correct answer";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConclusionPattern {
    pub text: String,
    folded: String,
    normalized: String,
}

impl ConclusionPattern {
    pub fn new(text: &str) -> Self {
        Self { text: text.to_string(), folded: text.trim_start().to_lowercase(), normalized: normalize_for_match(text) }
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }
}

#[derive(Debug, Error)]
pub enum PatternSetError {
    #[error("reading pattern set {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("pattern set is empty")]
    Empty,
    #[error("pattern {0:?} is empty after normalization")]
    Blank(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConclusionPatternSet {
    patterns: Vec<ConclusionPattern>,
}

impl Default for ConclusionPatternSet {
    fn default() -> Self {
        Self { patterns: DEFAULT_CONCLUSION_PATTERNS.iter().map(|p| ConclusionPattern::new(p)).collect() }
    }
}

impl ConclusionPatternSet {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, PatternSetError> {
        if patterns.is_empty() {
            return Err(PatternSetError::Empty);
        }
        let patterns: Vec<ConclusionPattern> = patterns.iter().map(|p| ConclusionPattern::new(p.as_ref())).collect();
        if let Some(p) = patterns.iter().find(|p| p.normalized.is_empty()) {
            return Err(PatternSetError::Blank(p.text.clone()));
        }
        Ok(Self { patterns })
    }

    /// One pattern per non-blank line; lines starting with `//` are comments.
    pub fn load(path: &Path) -> Result<Self, PatternSetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PatternSetError::Io { path: path.display().to_string(), source })?;
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("//")).collect();
        Self::new(&lines)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[ConclusionPattern] {
        &self.patterns
    }

    /// 1-based id of the pattern that removes `sentence`, if any.
    ///
    /// Literal (case-folded) prefixes are tried first so `**Answer**:` is
    /// attributed to its own entry rather than to `###Answer:`, which is
    /// identical once markdown is stripped.
    pub fn match_sentence(&self, sentence: &str) -> Option<usize> {
        let folded = sentence.trim_start().to_lowercase();
        if let Some(i) = self.patterns.iter().position(|p| folded.starts_with(&p.folded)) {
            return Some(i + 1);
        }
        let normalized = normalize_for_match(sentence);
        if let Some(i) = self.patterns.iter().position(|p| normalized.starts_with(&p.normalized)) {
            return Some(i + 1);
        }
        self.patterns
            .iter()
            .position(|p| p.normalized == MID_SENTENCE_PATTERN)
            .filter(|_| normalized.contains(&format!(", {MID_SENTENCE_PATTERN}")))
            .map(|i| i + 1)
    }

    /// Whether `text` still contains any pattern anywhere (normalized
    /// substring scan). Stricter than the sentence-prefix removal rule.
    pub fn occurs_in(&self, text: &str) -> Option<usize> {
        let normalized = normalize_for_match(text);
        self.patterns.iter().position(|p| normalized.contains(&p.normalized)).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace {trace_id} does not belong to sample {sample_id}")]
pub struct IdMismatch {
    pub trace_id: String,
    pub sample_id: String,
}

/// CR/IR label from the extracted prediction alone.
pub fn classify_prediction(predicted_index: Option<usize>, gold_index: usize) -> Classification {
    match predicted_index {
        Some(p) if p == gold_index => Classification::Correct,
        Some(_) => Classification::Incorrect,
        None => Classification::Unclassifiable,
    }
}

pub fn classify(trace: &ReasoningTrace, sample: &RawSample) -> Result<Classification, IdMismatch> {
    if trace.sample_id != sample.sample_id {
        return Err(IdMismatch { trace_id: trace.sample_id.clone(), sample_id: sample.sample_id.clone() });
    }
    Ok(classify_prediction(trace.predicted_index, sample.gold_index))
}

/// Runs answer extraction on `trace.raw_text` and fills in the prediction
/// and its classification.
pub fn score_trace(
    trace: &ReasoningTrace,
    sample: &RawSample,
    rules: &RuleTable,
) -> Result<ReasoningTrace, IdMismatch> {
    let extraction = rules.extract(&trace.raw_text, &sample.options);
    let mut scored = trace.clone();
    scored.predicted_index = extraction.predicted_index;
    scored.extraction_method = extraction.method;
    scored.classification = classify(&scored, sample)?;
    Ok(scored)
}

fn is_header_line(line: &str) -> bool {
    line.starts_with("###") || line.starts_with("**")
}

/// Splits text into sentences.
///
/// Lines are split on `.`, `!` or `?` followed by whitespace or the end of
/// the line. A line opening with `###` or `**` is kept whole as a single
/// sentence. Sentences are trimmed; empty ones are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if is_header_line(line) {
            out.push(line.to_string());
            continue;
        }
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if matches!(c, '.' | '!' | '?') {
                let at_break = match chars.peek() {
                    None => true,
                    Some((_, next)) => next.is_whitespace(),
                };
                if at_break {
                    let end = i + c.len_utf8();
                    let s = line[start..end].trim();
                    if !s.is_empty() {
                        out.push(s.to_string());
                    }
                    start = end;
                }
            }
        }
        let tail = line[start..].trim();
        if !tail.is_empty() {
            out.push(tail.to_string());
        }
    }
    out
}

/// Partitions sentences into those kept and those opening with a conclusion
/// pattern. Kept sentences retain their order and original text.
pub fn remove_conclusions(
    sentences: &[String],
    patterns: &ConclusionPatternSet,
) -> (Vec<String>, Vec<RemovedSentence>) {
    let mut kept = Vec::with_capacity(sentences.len());
    let mut removed = Vec::new();
    for s in sentences {
        match patterns.match_sentence(s) {
            Some(pattern_id) => removed.push(RemovedSentence { sentence: s.clone(), pattern_id }),
            None => kept.push(s.clone()),
        }
    }
    (kept, removed)
}

/// Removes gold-answer tokens from each sentence.
///
/// The gold text is reduced to its normalized word sequence with leading
/// articles dropped. A token run matching that sequence is removed together
/// with an article directly before it; the last word of the run may carry a
/// suffix ("red mug's", "paper bags"). For one-word answers every token
/// containing the word is removed as well ("teacup" for "cup"). Sentences
/// left without tokens disappear. Removed tokens are returned in text order.
pub fn scrub_ground_truth(sentences: &[String], gold_text: &str) -> (Vec<String>, Vec<String>) {
    let gold = answer_words(gold_text);
    if gold.is_empty() {
        return (sentences.to_vec(), Vec::new());
    }
    let mut out = Vec::with_capacity(sentences.len());
    let mut scrubbed = Vec::new();
    for sentence in sentences {
        let tokens: Vec<&str> = sentence.split_whitespace().collect();
        let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();
        let mut drop = vec![false; tokens.len()];
        mark_gold_runs(&normalized, &gold, &mut drop);
        if let [word] = gold.as_slice() {
            for (i, n) in normalized.iter().enumerate() {
                if n.contains(word.as_str()) {
                    drop[i] = true;
                }
            }
        }
        if !drop.iter().any(|d| *d) {
            out.push(sentence.clone());
            continue;
        }
        let mut kept = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if drop[i] {
                scrubbed.push(t.to_string());
            } else {
                kept.push(*t);
            }
        }
        if !kept.is_empty() {
            out.push(kept.join(" "));
        }
    }
    (out, scrubbed)
}

/// Marks non-overlapping runs of `gold` among the non-empty normalized
/// tokens, plus a directly preceding article. Punctuation-only tokens inside
/// a run are dropped with it.
fn mark_gold_runs(normalized: &[String], gold: &[String], drop: &mut [bool]) {
    let words: Vec<usize> = (0..normalized.len()).filter(|&i| !normalized[i].is_empty()).collect();
    let mut w = 0;
    while w + gold.len() <= words.len() {
        let run = &words[w..w + gold.len()];
        let run_words: Vec<&str> = run.iter().map(|&i| normalized[i].as_str()).collect();
        if run_matches(&run_words, gold) {
            drop[run[0]..=run[run.len() - 1]].fill(true);
            if w > 0 && is_article(&normalized[words[w - 1]]) {
                drop[words[w - 1]] = true;
            }
            w += gold.len();
        } else {
            w += 1;
        }
    }
}

/// Equal words, except that the last word of a multi-word gold only needs
/// to start with the gold word so possessives and plurals match.
fn run_matches(words: &[&str], gold: &[String]) -> bool {
    let last = if gold.len() > 1 { gold.len() - 1 } else { usize::MAX };
    words.len() == gold.len()
        && words
            .iter()
            .zip(gold)
            .enumerate()
            .all(|(i, (w, g))| if i == last { w.starts_with(g.as_str()) } else { w == g })
}

/// Whether `text` still contains the gold answer under the scrub rules of
/// [`scrub_ground_truth`].
pub fn contains_gold(text: &str, gold_text: &str) -> bool {
    let gold = answer_words(gold_text);
    let words = crate::text::word_sequence(text);
    if let [word] = gold.as_slice() {
        return words.iter().any(|w| w.contains(word.as_str()));
    }
    words.windows(gold.len()).any(|win| {
        let win: Vec<&str> = win.iter().map(String::as_str).collect();
        run_matches(&win, &gold)
    })
}

const MAX_PASSES: usize = 64;

/// Refines one classified trace.
///
/// split → remove conclusions → scrub gold tokens (Incorrect only) → join
/// with single spaces. Joining can merge fragments into a new sentence that
/// a pattern matches, so the pipeline is repeated on its own output until it
/// stops changing; the result is therefore a fixed point and refining it
/// again is a no-op.
pub fn refine(
    trace: &ReasoningTrace,
    sample: &RawSample,
    patterns: &ConclusionPatternSet,
) -> Result<RefinedTrace, IdMismatch> {
    if trace.sample_id != sample.sample_id {
        return Err(IdMismatch { trace_id: trace.sample_id.clone(), sample_id: sample.sample_id.clone() });
    }
    let scrub = trace.classification == Classification::Incorrect;
    let mut removed_sentences = Vec::new();
    let mut scrubbed_tokens = Vec::new();
    let mut text = trace.raw_text.clone();
    for pass in 0.. {
        let sentences = split_sentences(&text);
        let (kept, removed) = remove_conclusions(&sentences, patterns);
        removed_sentences.extend(removed);
        let kept = if scrub {
            let (kept, tokens) = scrub_ground_truth(&kept, sample.gold_text());
            scrubbed_tokens.extend(tokens);
            kept
        } else {
            kept
        };
        let next = kept.join(" ");
        let next = next.trim();
        if next == text || pass + 1 == MAX_PASSES {
            text = next.to_string();
            break;
        }
        text = next.to_string();
    }
    Ok(RefinedTrace { sample_id: trace.sample_id.clone(), refined_text: text, removed_sentences, scrubbed_tokens })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineStats {
    pub traces: usize,
    /// Removed sentence counts keyed by 1-based pattern id.
    pub sentences_removed_per_pattern: BTreeMap<usize, usize>,
    pub traces_fully_emptied: usize,
    /// Number of traces that lost at least one gold token.
    pub scrub_events: usize,
    pub scrubbed_tokens: usize,
    pub skipped_unclassifiable: usize,
}

impl RefineStats {
    pub fn record(&mut self, refined: &RefinedTrace) {
        self.traces += 1;
        for r in &refined.removed_sentences {
            *self.sentences_removed_per_pattern.entry(r.pattern_id).or_default() += 1;
        }
        if refined.refined_text.is_empty() {
            self.traces_fully_emptied += 1;
        }
        if !refined.scrubbed_tokens.is_empty() {
            self.scrub_events += 1;
            self.scrubbed_tokens += refined.scrubbed_tokens.len();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineOptions {
    pub include_unclassifiable: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { include_unclassifiable: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} trace(s) reference unknown samples: {}", .orphans.len(), .orphans.join(", "))]
pub struct JoinError {
    pub orphans: Vec<String>,
}

pub fn index_samples(samples: &[RawSample]) -> HashMap<&str, &RawSample> {
    samples.iter().map(|s| (s.sample_id.as_str(), s)).collect()
}

/// Refines a corpus of classified traces. Output follows input order.
pub fn refine_corpus(
    traces: &[ReasoningTrace],
    samples: &[RawSample],
    patterns: &ConclusionPatternSet,
    options: RefineOptions,
) -> Result<(Vec<RefinedTrace>, RefineStats), JoinError> {
    let by_id = index_samples(samples);
    let orphans: Vec<String> =
        traces.iter().filter(|t| !by_id.contains_key(t.sample_id.as_str())).map(|t| t.sample_id.clone()).collect();
    if !orphans.is_empty() {
        return Err(JoinError { orphans });
    }
    let mut stats = RefineStats::default();
    let mut out = Vec::with_capacity(traces.len());
    for t in traces {
        if !options.include_unclassifiable && t.classification == Classification::Unclassifiable {
            stats.skipped_unclassifiable += 1;
            continue;
        }
        let refined = refine(t, by_id[t.sample_id.as_str()], patterns).expect("joined by id");
        stats.record(&refined);
        out.push(refined);
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::ExtractionMethod;
    use crate::rng::SplitMix64;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    fn sample() -> RawSample {
        RawSample {
            sample_id: "worked-example".into(),
            video_ref: "v".into(),
            question: "Which object was tidied up by the person?".into(),
            options: s(&["The blanket", "The table", "The closet/cabinet", "The clothes"]),
            gold_index: 0,
            category: None,
        }
    }

    fn trace(text: &str, predicted: Option<usize>) -> ReasoningTrace {
        let mut t = ReasoningTrace::unscored("worked-example", text, "test");
        t.predicted_index = predicted;
        t.extraction_method =
            if predicted.is_some() { ExtractionMethod::MarkerPattern } else { ExtractionMethod::Unparseable };
        t.classification = classify_prediction(predicted, 0);
        t
    }

    #[test]
    fn default_set_has_ten_patterns() {
        let set = ConclusionPatternSet::default();
        assert_eq!(set.len(), 10);
        assert_eq!(set.patterns()[7].text, "Therefore, the correct answer is");
    }

    #[test]
    fn classification_cases() {
        let smp = sample();
        assert_eq!(classify(&trace("x", Some(2)), &smp).unwrap(), Classification::Incorrect);
        assert_eq!(classify(&trace("x", Some(0)), &smp).unwrap(), Classification::Correct);
        assert_eq!(classify(&trace("x", None), &smp).unwrap(), Classification::Unclassifiable);
        let mut other = trace("x", Some(0));
        other.sample_id = "nope".into();
        assert!(classify(&other, &smp).is_err());
    }

    #[test]
    fn score_trace_extracts_then_classifies() {
        let smp = sample();
        let t = ReasoningTrace::unscored("worked-example", "Looking around.\n###Answer: C", "g");
        let scored = score_trace(&t, &smp, &RuleTable::default()).unwrap();
        assert_eq!(scored.predicted_index, Some(2));
        assert_eq!(scored.classification, Classification::Incorrect);
    }

    #[test]
    fn split_on_terminators() {
        assert_eq!(split_sentences("A. B? C!"), s(&["A.", "B?", "C!"]));
        assert_eq!(split_sentences("###Answer: C\nBecause..."), s(&["###Answer: C", "Because..."]));
        assert_eq!(split_sentences("e.g.x is fine. Next"), s(&["e.g.x is fine.", "Next"]));
        assert_eq!(split_sentences("**Answer**: B. It is.\n\n  tail  "), s(&["**Answer**: B. It is.", "tail"]));
    }

    #[test]
    fn split_preserves_non_whitespace_stream() {
        let mut rng = SplitMix64::new(11);
        let alphabet: Vec<char> = "ab .!?\n\t#*x,".chars().collect();
        for _ in 0..1000 {
            let len = rng.below(80);
            let t: String = (0..len).map(|_| *rng.choose(&alphabet)).collect();
            let joined = split_sentences(&t).join(" ");
            let strip = |x: &str| x.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            assert_eq!(strip(&joined), strip(&t), "{t:?}");
        }
    }

    #[test]
    fn removal_ids() {
        let set = ConclusionPatternSet::default();
        assert_eq!(set.match_sentence("Therefore, the correct answer is C."), Some(8));
        assert_eq!(set.match_sentence("**Answer**: B"), Some(2));
        assert_eq!(set.match_sentence("### answer: b"), Some(1));
        assert_eq!(set.match_sentence("*The correct answer* is D"), Some(6));
        assert_eq!(set.match_sentence("So, the correct answer is D."), Some(6));
        assert_eq!(set.match_sentence("GIVEN THESE OBSERVATIONS AND THE CONTEXT, B."), Some(10));
        assert_eq!(
            set.match_sentence("The individual is standing in front of a wooden cabinet with slatted doors."),
            None
        );
        assert_eq!(set.match_sentence("I must answer: carefully"), None);
    }

    #[test]
    fn remove_keeps_order_and_text() {
        let set = ConclusionPatternSet::default();
        let input = s(&["First  fact.", "###Conclusion: B", "Second fact.", "Based on these observations, B."]);
        let (kept, removed) = remove_conclusions(&input, &set);
        assert_eq!(kept, s(&["First  fact.", "Second fact."]));
        assert_eq!(removed.iter().map(|r| r.pattern_id).collect::<Vec<_>>(), vec![3, 9]);
        let plain = s(&["No conclusion here.", "None here either."]);
        let (kept, removed) = remove_conclusions(&plain, &set);
        assert_eq!(kept, plain);
        assert!(removed.is_empty());
    }

    #[test]
    fn scrub_multiword_gold_with_article() {
        let (out, tokens) = scrub_ground_truth(&s(&["He folded the blanket neatly"]), "The blanket");
        assert_eq!(out, s(&["He folded neatly"]));
        assert_eq!(tokens, s(&["the", "blanket"]));
    }

    #[test]
    fn scrub_multiword_gold_possessive_and_plural() {
        let (out, tokens) =
            scrub_ground_truth(&s(&["Near a red mug's handle, two red mugs sit by a red cup."]), "A red mug");
        assert_eq!(out, s(&["Near handle, two sit by a red cup."]));
        assert_eq!(tokens, s(&["a", "red", "mug's", "red", "mugs"]));
        assert!(!contains_gold(&out[0], "A red mug"));
        assert!(contains_gold("the red mugs", "A red mug"));
        assert!(!contains_gold("a mug that is red", "A red mug"));
    }

    #[test]
    fn scrub_absent_gold_is_identity() {
        let input = s(&["Nothing relevant.", "Still nothing."]);
        let (out, tokens) = scrub_ground_truth(&input, "The blanket");
        assert_eq!(out, input);
        assert!(tokens.is_empty());
    }

    #[test]
    fn scrub_single_word_substring_matches_brute_force() {
        let (out, tokens) = scrub_ground_truth(&s(&["He lifted the teacup"]), "cup");
        assert_eq!(out, s(&["He lifted the"]));
        assert_eq!(tokens, s(&["teacup"]));

        // Brute-force oracle: scan every token for the gold substring.
        let mut rng = SplitMix64::new(3);
        let vocab = ["cup", "teacup", "cups", "the", "a", "cupboard", "mug", "Cup.", "hiccup", "table"];
        for _ in 0..500 {
            let n = 1 + rng.below(8);
            let toks: Vec<&str> = (0..n).map(|_| *rng.choose(&vocab)).collect();
            let sentence = toks.join(" ");
            let expected_removed: Vec<String> = toks
                .iter()
                .enumerate()
                .filter(|(i, t)| {
                    let norm = t.to_lowercase().replace('.', "");
                    norm.contains("cup")
                        // article glued to an exact match
                        || ((**t == "the" || **t == "a") && toks.get(i + 1).is_some_and(|n| n.to_lowercase().trim_end_matches('.') == "cup"))
                })
                .map(|(_, t)| t.to_string())
                .collect();
            let (_, got) = scrub_ground_truth(std::slice::from_ref(&sentence), "cup");
            assert_eq!(got, expected_removed, "{sentence}");
        }
    }

    #[test]
    fn scrub_multiword_repeated_runs() {
        let (out, tokens) = scrub_ground_truth(&s(&["a red cup, then another red cup."]), "red cup");
        assert_eq!(out, s(&["then another"]));
        assert_eq!(tokens, s(&["a", "red", "cup,", "red", "cup."]));
        assert!(!contains_gold(&out[0], "red cup"));
    }

    #[test]
    fn refine_full_removal_gives_empty() {
        let r = refine(&trace("###Answer: B", Some(1)), &sample(), &ConclusionPatternSet::default()).unwrap();
        assert_eq!(r.refined_text, "");
        assert_eq!(r.removed_sentences.len(), 1);
    }

    #[test]
    fn correct_traces_are_not_scrubbed() {
        let text = "The person folds the blanket. ###Answer: A";
        let r = refine(&trace(text, Some(0)), &sample(), &ConclusionPatternSet::default()).unwrap();
        assert_eq!(r.refined_text, "The person folds the blanket.");
        assert!(r.scrubbed_tokens.is_empty());
    }

    #[test]
    fn unclassifiable_traces_lose_conclusions_only() {
        let text = "The blanket is there.\nBased on these observations, maybe the blanket.";
        let r = refine(&trace(text, None), &sample(), &ConclusionPatternSet::default()).unwrap();
        assert_eq!(r.refined_text, "The blanket is there.");
    }

    #[test]
    fn merged_fragments_are_refined_to_a_fixed_point() {
        // "Based on" and "these observations" join into a pattern match.
        let text = "Fact one.\nBased on\nthese observations the closet.";
        let set = ConclusionPatternSet::default();
        let once = refine(&trace(text, Some(2)), &sample(), &set).unwrap();
        assert_eq!(once.refined_text, "Fact one.");
        let twice = refine(&trace(&once.refined_text, Some(2)), &sample(), &set).unwrap();
        assert_eq!(twice.refined_text, once.refined_text);
    }

    #[test]
    fn corpus_reports_orphans_and_stats() {
        let smp = sample();
        let mut orphan = trace("x", Some(0));
        orphan.sample_id = "ghost".into();
        let err = refine_corpus(
            &[orphan],
            std::slice::from_ref(&smp),
            &ConclusionPatternSet::default(),
            RefineOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err.orphans, vec!["ghost".to_string()]);

        let traces = vec![trace("A blanket on the bed. ###Answer: C", Some(2)), trace("###Answer: A", Some(0))];
        let (refined, stats) =
            refine_corpus(&traces, &[smp], &ConclusionPatternSet::default(), RefineOptions::default()).unwrap();
        assert_eq!(refined.len(), 2);
        assert_eq!(stats.sentences_removed_per_pattern.get(&1), Some(&2));
        assert_eq!(stats.traces_fully_emptied, 1);
        assert_eq!(stats.scrub_events, 1);
    }

    #[test]
    fn pattern_set_file_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("patterns.txt");
        std::fs::write(&path, "// custom\nIn summary\n\nFinal answer\n").unwrap();
        let set = ConclusionPatternSet::load(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.match_sentence("In summary, B."), Some(1));
    }
}
