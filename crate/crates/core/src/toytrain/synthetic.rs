//! Synthetic VideoQA benchmark with a computable Bayes accuracy.
//!
//! Generative process, per sample:
//!
//! 1. A latent class `z` is drawn uniformly from `0..classes`. The options
//!    are the fixed list `OBJECTS[..classes]` and the gold index is `z`.
//! 2. The question carries `cues` cue words. Each one independently belongs
//!    to class `z` with probability `cue_accuracy` and otherwise to a
//!    uniformly chosen other class; within a class the word is uniform over
//!    `cue_words` words (`cue{c}x{m}`).
//! 3. The question also carries `distractors` words drawn uniformly from a
//!    pool of `distractor_words` (`noise{i}`), independent of `z`.
//!
//! Only cue words carry information, so the Bayes-optimal rule picks the
//! class with the most cue words and breaks ties uniformly. `bayes_accuracy`
//! computes its accuracy by enumerating every class assignment of the cues.
//!
//! The simulated generator sees the latent class. Its observation
//! sentences always describe `z` through class concept words
//! (`obj{c}part{m}`), and it interprets every cue word of the question by
//! naming a concept word of the cue's own class. That interpretation is
//! world knowledge the answer label does not carry: the label only says
//! which class won the noisy vote. With probability `generator_error_rate` it then
//! concludes a different class, naming that class's concept words and
//! letter in conclusion sentences, and mentions the gold object in passing.
//! Refinement strips exactly those parts, so refined reasoning is a clean
//! view of `z` while the original reasoning of incorrect traces is not.

use serde::{Deserialize, Serialize};

use super::train::{train, TrainConfig, TrainError};
use crate::answer::RuleTable;
use crate::dataset::{build, BuildConfig, BuildError, Mode, ReasoningSource};
use crate::generation::MOCK_GENERATOR_ID;
use crate::record::{LossWeights, RawSample, ReasoningTrace, RefinedTrace};
use crate::refine::{refine_corpus, score_trace, ConclusionPatternSet, RefineOptions};
use crate::rng::SplitMix64;
use crate::text::option_letter;

pub const OBJECTS: [&str; 8] = ["kettle", "ladder", "basket", "lamp", "chair", "towel", "bucket", "spoon"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub cue_words: usize,
    pub cues: usize,
    pub cue_accuracy: f64,
    pub distractor_words: usize,
    pub distractors: usize,
    pub concept_words: usize,
    pub generator_error_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            cue_words: 20,
            cues: 5,
            cue_accuracy: 0.5,
            distractor_words: 400,
            distractors: 0,
            concept_words: 1,
            generator_error_rate: 0.33,
        }
    }
}

fn cue_word(class: usize, m: usize) -> String {
    format!("cue{class}x{m}")
}

/// Class of a cue word, `None` for any other word.
fn cue_class(word: &str) -> Option<usize> {
    word.strip_prefix("cue")?.split('x').next()?.parse().ok()
}

fn concept_word(class: usize, m: usize) -> String {
    format!("obj{class}part{m}")
}

impl SyntheticSpec {
    fn check(&self) {
        assert!((2..=OBJECTS.len()).contains(&self.classes), "classes must be in 2..=8");
        assert!(self.cue_words >= 1 && self.concept_words >= 1 && self.distractor_words >= 1);
        assert!((0.0..=1.0).contains(&self.cue_accuracy));
        assert!((0.0..=1.0).contains(&self.generator_error_rate));
    }

    /// Samples `n` questions. Ids are `{prefix}{i}`; the category is the
    /// number of cues that point at the true class.
    pub fn samples(&self, n: usize, seed: u64, prefix: &str) -> Vec<RawSample> {
        self.check();
        let mut rng = SplitMix64::for_stream(seed, &format!("synthetic-samples/{prefix}"));
        (0..n)
            .map(|i| {
                let z = rng.below(self.classes);
                let mut words = Vec::with_capacity(self.cues + self.distractors);
                let mut true_cues = 0;
                for _ in 0..self.cues {
                    let class = if rng.bernoulli(self.cue_accuracy) {
                        true_cues += 1;
                        z
                    } else {
                        (z + 1 + rng.below(self.classes - 1)) % self.classes
                    };
                    words.push(cue_word(class, rng.below(self.cue_words)));
                }
                for _ in 0..self.distractors {
                    words.push(format!("noise{}", rng.below(self.distractor_words)));
                }
                rng.shuffle(&mut words);
                RawSample {
                    sample_id: format!("{prefix}{i}"),
                    video_ref: format!("synthetic/{prefix}{i}.mp4"),
                    question: format!("{}?", words.join(" ")),
                    options: OBJECTS[..self.classes].iter().map(|s| s.to_string()).collect(),
                    gold_index: z,
                    category: Some(format!("cues{true_cues}")),
                }
            })
            .collect()
    }

    /// Simulated generator output for one sample.
    pub fn trace(&self, sample: &RawSample, seed: u64) -> ReasoningTrace {
        self.check();
        let mut rng = SplitMix64::for_stream(seed, &format!("synthetic-trace/{}", sample.sample_id));
        let z = sample.gold_index;
        let k = sample.options.len();
        let predicted = if rng.bernoulli(self.generator_error_rate) { (z + 1 + rng.below(k - 1)) % k } else { z };
        let concepts = |class: usize| -> String {
            (0..self.concept_words).map(|m| concept_word(class, m)).collect::<Vec<_>>().join(" ")
        };

        let readings: Vec<String> = sample
            .question
            .trim_end_matches('?')
            .split(' ')
            .filter_map(cue_class)
            .map(|class| concept_word(class, rng.below(self.concept_words)))
            .collect();
        let mut body = vec![format!("Holding {}.", concepts(z))];
        if !readings.is_empty() {
            body.push(format!("Clues {}.", readings.join(" ")));
        }
        if predicted != z {
            let at = 1 + rng.below(body.len());
            body.insert(at, format!("Something like {} can be seen near the wall.", sample.gold_text()));
        }
        let letter = option_letter(predicted);
        let conclusion = [
            format!("Based on these observations, the person is using {}.", concepts(predicted)),
            format!("Therefore, the correct answer is {letter}."),
            format!("###Answer: {letter}"),
        ];
        let text = format!("{}\n{}", body.join(" "), conclusion.join("\n"));
        ReasoningTrace::unscored(&sample.sample_id, text, MOCK_GENERATOR_ID)
    }

    pub fn traces(&self, samples: &[RawSample], seed: u64) -> Vec<ReasoningTrace> {
        samples.iter().map(|s| self.trace(s, seed)).collect()
    }

    /// Accuracy of the Bayes-optimal answer given the question, by
    /// enumerating all `classes^cues` assignments of cue classes with the
    /// true class fixed to 0 (the process is symmetric in the classes).
    pub fn bayes_accuracy(&self) -> f64 {
        self.check();
        let k = self.classes;
        let other = (1.0 - self.cue_accuracy) / (k - 1) as f64;
        let mut total = 0.0;
        let mut assignment = vec![0usize; self.cues];
        loop {
            let mut counts = vec![0usize; k];
            let mut prob = 1.0;
            for &c in &assignment {
                counts[c] += 1;
                prob *= if c == 0 { self.cue_accuracy } else { other };
            }
            let best = *counts.iter().max().unwrap();
            if counts[0] == best {
                total += prob / counts.iter().filter(|&&c| c == best).count() as f64;
            }
            // Next assignment in base-k counting order.
            let mut i = 0;
            loop {
                if i == assignment.len() {
                    return total;
                }
                assignment[i] += 1;
                if assignment[i] < k {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
        }
    }
}

/// Train/eval split with classified and refined traces for the training
/// part.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<RawSample>,
    pub eval: Vec<RawSample>,
    pub traces: Vec<ReasoningTrace>,
    pub refined: Vec<RefinedTrace>,
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec, n_train: usize, n_eval: usize, seed: u64) -> Self {
        let train = spec.samples(n_train, seed, "train-");
        let eval = spec.samples(n_eval, seed, "eval-");
        let rules = RuleTable::default();
        let traces: Vec<ReasoningTrace> =
            train.iter().map(|s| score_trace(&spec.trace(s, seed), s, &rules).expect("ids match")).collect();
        let (refined, _) = refine_corpus(&traces, &train, &ConclusionPatternSet::default(), RefineOptions::default())
            .expect("ids match");
        Self { train, eval, traces, refined }
    }

    /// Builds the dataset for one arm, trains on it and returns the final
    /// eval accuracy.
    pub fn run(
        &self,
        mode: Mode,
        source: ReasoningSource,
        weights: LossWeights,
        config: &TrainConfig,
    ) -> Result<f64, ArmError> {
        let build_config =
            BuildConfig { mode, reasoning_source: source, weights, seed: config.seed, ..Default::default() };
        let built = build(&self.train, &self.traces, &self.refined, &build_config)?;
        let config = TrainConfig { weights, ..config.clone() };
        let trained = train(&built.examples, &built.manifest, &config, Some(&self.eval))?;
        Ok(trained.final_accuracy())
    }
}

/// The three arms compared on the benchmark, as final eval accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmAccuracies {
    /// Multi-task on refined reasoning, beta = 0.
    pub qa_only: f64,
    /// Multi-task on refined reasoning, beta = 0.5.
    pub balanced: f64,
    /// Single-task joint targets built from the original traces.
    pub stl_original: f64,
}

/// Corpus sizes and training settings for the MTL comparison.
///
/// Training uses small batches and a larger init than the library default:
/// with L1-normalized inputs each cue feature is about `1/cues`, and the
/// default settings leave a 150-sample run at chance.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub spec: SyntheticSpec,
    pub n_train: usize,
    pub n_eval: usize,
    pub config: TrainConfig,
}

impl Default for Benchmark {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::default(),
            n_train: 150,
            n_eval: 1000,
            config: TrainConfig {
                learning_rate: 0.1,
                epochs: 300,
                batch: 2,
                init_scale: 0.5,
                hidden: 16,
                ..Default::default()
            },
        }
    }
}

impl Benchmark {
    /// Generates the corpus for `seed` and trains every arm with that seed.
    pub fn run_seed(&self, seed: u64) -> Result<ArmAccuracies, ArmError> {
        let corpus = SyntheticCorpus::generate(&self.spec, self.n_train, self.n_eval, seed);
        let config = TrainConfig { seed, ..self.config.clone() };
        Ok(ArmAccuracies {
            qa_only: corpus.run(Mode::MtlAll, ReasoningSource::Refined, LossWeights::QA_ONLY, &config)?,
            balanced: corpus.run(Mode::MtlAll, ReasoningSource::Refined, LossWeights::BALANCED, &config)?,
            stl_original: corpus.run(Mode::StlAll, ReasoningSource::Original, LossWeights::BALANCED, &config)?,
        })
    }

    /// Runs `seeds` in parallel threads; results keep the input order.
    pub fn run_seeds(&self, seeds: &[u64]) -> Result<Vec<ArmAccuracies>, ArmError> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || self.run_seed(s))).collect();
            handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArmError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
