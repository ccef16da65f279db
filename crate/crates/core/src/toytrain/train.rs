use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{cross_entropy_one_hot, cross_entropy_sparse};
use super::model::{Dims, ToyModel, DEFAULT_HIDDEN, DEFAULT_INIT_SCALE, K_MAX};
use super::objective::{batch_loss_into, encode_examples, EncodeError, EncodedExample, LossTerms, Objective};
use super::tokenizer::{Tokenizer, DEFAULT_MAX_VOCAB};
use crate::dataset::{render_input, DatasetManifest};
use crate::record::{LossWeights, RawSample, TrainingExample, ValidationError};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Applied to multi-task datasets; single-task datasets use the
    /// unweighted joint loss.
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub hidden: usize,
    pub max_vocab: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::BALANCED,
            learning_rate: 0.1,
            epochs: 20,
            batch: 16,
            seed: 0,
            init_scale: DEFAULT_INIT_SCALE,
            hidden: DEFAULT_HIDDEN,
            max_vocab: DEFAULT_MAX_VOCAB,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.weights.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ValidationError::new("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(ValidationError::new("init_scale", format!("{} must be positive", self.init_scale)));
        }
        for (field, value) in
            [("epochs", self.epochs), ("batch", self.batch), ("hidden", self.hidden), ("max_vocab", self.max_vocab)]
        {
            if value == 0 {
                return Err(ValidationError::new(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(#[from] ValidationError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite parameters after epoch {epoch}, batch {batch}")]
    NonFiniteParameters { epoch: usize, batch: usize },
    #[error("{} eval samples also occur in the training set, e.g. {}", .0.len(), .0[0])]
    Overlap(Vec<String>),
}

/// End-of-epoch metrics over the full training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub c_qa: f64,
    /// Mean over samples with a reasoning target; absent when none has one.
    pub c_rea: Option<f64>,
    /// Accuracy on the eval set when one is given, otherwise on the
    /// training samples.
    pub eval_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: ToyModel,
    pub tokenizer: Tokenizer,
    pub objective: Objective,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn final_accuracy(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.eval_acc)
    }
}

/// Minibatch SGD over encoded samples. Exposes single steps so callers can
/// inspect every update.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ToyModel,
    items: Vec<EncodedExample>,
    alpha: f64,
    beta: f64,
    learning_rate: f64,
    batch: usize,
    shuffle: SplitMix64,
    grads: ToyModel,
}

impl Trainer {
    /// Initializes parameters from the `init` stream of `config.seed`.
    pub fn new(items: Vec<EncodedExample>, vocab: usize, objective: Objective, config: &TrainConfig) -> Self {
        let dims = Dims { vocab, hidden: config.hidden, k_max: K_MAX };
        let model = ToyModel::init(dims, config.init_scale, &mut SplitMix64::for_stream(config.seed, "init"));
        let (alpha, beta) = objective.coefficients();
        Self {
            model,
            items,
            alpha,
            beta,
            learning_rate: config.learning_rate,
            batch: config.batch,
            shuffle: SplitMix64::for_stream(config.seed, "shuffle"),
            grads: ToyModel::zeros(dims),
        }
    }

    pub fn items(&self) -> &[EncodedExample] {
        &self.items
    }

    /// Shuffles the sample order for the next epoch and chunks it into
    /// batches of item indices.
    pub fn next_epoch_batches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        self.shuffle.shuffle(&mut order);
        order.chunks(self.batch).map(<[usize]>::to_vec).collect()
    }

    /// One SGD update, `p -= lr * grad`. Parameters are left untouched when
    /// the loss is not finite.
    pub fn step(&mut self, batch: &[usize]) -> Result<LossTerms, StepError> {
        let refs: Vec<&EncodedExample> = batch.iter().map(|&i| &self.items[i]).collect();
        let terms = batch_loss_into(&self.model, &refs, self.alpha, self.beta, &mut self.grads);
        if !terms.loss.is_finite() {
            return Err(StepError::NonFiniteLoss);
        }
        self.model.add_scaled(&self.grads, -self.learning_rate);
        if !self.model.is_finite() {
            return Err(StepError::NonFiniteParameters);
        }
        Ok(terms)
    }

    /// Objective and both cross-entropies over all samples at the current
    /// parameters. The reasoning term is always evaluated here.
    pub fn evaluate(&self) -> LossTerms {
        let n = self.items.len() as f64;
        let mut qa = 0.0;
        let mut rea = 0.0;
        let mut rea_count = 0usize;
        for ex in &self.items {
            let h = self.model.hidden_state(&ex.x);
            qa += cross_entropy_one_hot(&self.model.qa_logits(&h, ex.k), ex.gold);
            if let Some(target) = &ex.reasoning {
                rea += cross_entropy_sparse(&self.model.rea_logits(&h), target).expect("normalized target");
                rea_count += 1;
            }
        }
        let c_qa = qa / n;
        LossTerms {
            loss: self.alpha * c_qa + self.beta * (rea / n),
            c_qa,
            c_rea: (rea_count > 0).then(|| rea / rea_count as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepError {
    NonFiniteLoss,
    NonFiniteParameters,
}

/// Accuracy of arg-max answers over encoded samples.
pub fn accuracy(model: &ToyModel, items: &[EncodedExample]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let hits = items.iter().filter(|ex| model.predict(&ex.x, ex.k) == ex.gold).count();
    hits as f64 / items.len() as f64
}

/// Encodes raw samples as answer-only examples under a fixed tokenizer.
pub fn encode_samples(samples: &[RawSample], tokenizer: &Tokenizer) -> Vec<EncodedExample> {
    samples
        .iter()
        .map(|s| EncodedExample {
            sample_id: s.sample_id.clone(),
            x: tokenizer.distribution(&render_input(s)),
            k: s.options.len(),
            gold: s.gold_index,
            reasoning: None,
        })
        .collect()
}

/// Objective implied by a dataset's mode.
pub fn objective_for(manifest: &DatasetManifest, config: &TrainConfig) -> Objective {
    if manifest.mode.is_multi_task() {
        Objective::MultiTask(config.weights)
    } else {
        Objective::SingleTask
    }
}

/// Vocabulary over every input and target text of the dataset.
pub fn build_tokenizer(examples: &[TrainingExample], max_vocab: usize) -> Tokenizer {
    Tokenizer::build(examples.iter().flat_map(|e| [e.input_text.as_str(), e.target_text.as_str()]), max_vocab)
}

/// Trains a model on a built dataset. Deterministic given the dataset
/// bytes and `config`.
pub fn train(
    examples: &[TrainingExample],
    manifest: &DatasetManifest,
    config: &TrainConfig,
    eval: Option<&[RawSample]>,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(eval) = eval {
        let overlap = manifest.overlapping(eval.iter().map(|s| s.sample_id.as_str()));
        if !overlap.is_empty() {
            return Err(TrainError::Overlap(overlap.into_iter().map(String::from).collect()));
        }
    }
    let tokenizer = build_tokenizer(examples, config.max_vocab);
    let items = encode_examples(examples, &tokenizer)?;
    let eval_items = eval.map(|e| encode_samples(e, &tokenizer));
    let objective = objective_for(manifest, config);
    let mut trainer = Trainer::new(items, tokenizer.len(), objective, config);

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        for (b, batch) in trainer.next_epoch_batches().iter().enumerate() {
            trainer.step(batch).map_err(|e| match e {
                StepError::NonFiniteLoss => TrainError::NonFiniteLoss { epoch, batch: b },
                StepError::NonFiniteParameters => TrainError::NonFiniteParameters { epoch, batch: b },
            })?;
        }
        let terms = trainer.evaluate();
        let eval_acc = accuracy(&trainer.model, eval_items.as_deref().unwrap_or(trainer.items()));
        history.push(EpochRecord { epoch, loss: terms.loss, c_qa: terms.c_qa, c_rea: terms.c_rea, eval_acc });
    }
    Ok(TrainedModel { model: trainer.model, tokenizer, objective, config: config.clone(), history })
}

pub const HISTORY_HEADER: &str = "epoch,loss,c_qa,c_rea,eval_acc";

/// History as CSV; `c_rea` is empty when undefined.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let c_rea = r.c_rea.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.loss, r.c_qa, c_rea, r.eval_acc));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub eval_acc: f64,
}

/// Trains once per `beta` with `alpha = 1 - beta` and otherwise identical
/// settings. Runs are independent and execute on separate threads.
pub fn sweep_beta(
    examples: &[TrainingExample],
    manifest: &DatasetManifest,
    betas: &[f64],
    config: &TrainConfig,
    eval: Option<&[RawSample]>,
) -> Result<Vec<SweepRow>, TrainError> {
    let configs: Vec<TrainConfig> = betas
        .iter()
        .map(|&b| Ok(TrainConfig { weights: LossWeights::from_beta(b)?, ..config.clone() }))
        .collect::<Result<_, ValidationError>>()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || train(examples, manifest, c, eval))).collect();
        handles
            .into_iter()
            .zip(betas)
            .map(|(h, &beta)| {
                let trained = h.join().expect("training thread panicked")?;
                Ok(SweepRow { beta, eval_acc: trained.final_accuracy() })
            })
            .collect()
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,eval_acc\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.beta, r.eval_acc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build, BuildConfig, BuiltDataset, Mode, ReasoningSource};
    use crate::toytrain::dump::{params_bytes, read_params, DumpError};
    use crate::toytrain::synthetic::{SyntheticCorpus, SyntheticSpec};

    fn dataset(spec: &SyntheticSpec, mode: Mode, n: usize, seed: u64) -> (SyntheticCorpus, BuiltDataset) {
        let corpus = SyntheticCorpus::generate(spec, n, 200, seed);
        let config = BuildConfig { mode, reasoning_source: ReasoningSource::Refined, seed, ..Default::default() };
        let built = build(&corpus.train, &corpus.traces, &corpus.refined, &config).unwrap();
        (corpus, built)
    }

    fn small_config() -> TrainConfig {
        TrainConfig { epochs: 5, batch: 4, hidden: 8, init_scale: 0.5, ..Default::default() }
    }

    #[test]
    fn separable_task_is_learned_within_50_epochs() {
        // Every cue names the gold class, so the task is linearly separable.
        let spec = SyntheticSpec { cue_accuracy: 1.0, cues: 2, cue_words: 3, ..Default::default() };
        let (_, built) = dataset(&spec, Mode::StlQa, 120, 1);
        let config = TrainConfig {
            weights: LossWeights::QA_ONLY,
            epochs: 50,
            batch: 1,
            learning_rate: 0.5,
            hidden: 16,
            init_scale: 0.5,
            ..Default::default()
        };
        let trained = train(&built.examples, &built.manifest, &config, None).unwrap();
        let acc = trained.final_accuracy();
        assert!(acc >= 0.99, "train accuracy {acc}");
        assert_eq!(trained.history.len(), 50);
        assert_eq!(trained.history[0].c_rea, None);
    }

    #[test]
    fn same_seed_gives_identical_dumps() {
        let (_, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 60, 2);
        let config = TrainConfig { weights: LossWeights::QA_ONLY, ..small_config() };
        let a = params_bytes(&train(&built.examples, &built.manifest, &config, None).unwrap());
        let b = params_bytes(&train(&built.examples, &built.manifest, &config, None).unwrap());
        assert_eq!(a, b);
        let other = TrainConfig { seed: 1, ..config };
        assert_ne!(a, params_bytes(&train(&built.examples, &built.manifest, &other, None).unwrap()));
    }

    #[test]
    fn dump_round_trips() {
        let (_, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 40, 3);
        let trained = train(&built.examples, &built.manifest, &small_config(), None).unwrap();
        let bytes = params_bytes(&trained);
        let (header, model, tokenizer) = read_params(&mut bytes.as_slice()).unwrap();
        assert_eq!(model, trained.model);
        assert_eq!(tokenizer.tokens(), trained.tokenizer.tokens());
        assert_eq!(header.config, trained.config);
        assert_eq!(header.objective, "multi-task");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&mut bad.as_slice()), Err(DumpError::Magic)));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_params(&mut long.as_slice()), Err(DumpError::Inconsistent(_))));
        assert!(matches!(read_params(&mut &bytes[..bytes.len() - 1]), Err(DumpError::Io(_))));
    }

    #[test]
    fn history_records_both_terms_for_multi_task() {
        let (corpus, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 40, 4);
        let trained = train(&built.examples, &built.manifest, &small_config(), Some(&corpus.eval)).unwrap();
        for r in &trained.history {
            assert!((r.loss - (0.5 * r.c_qa + 0.5 * r.c_rea.unwrap())).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.eval_acc));
        }
        let csv = history_csv(&trained.history);
        assert!(csv.starts_with("epoch,loss,c_qa,c_rea,eval_acc\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn sweep_with_one_beta_matches_direct_training() {
        let (corpus, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 40, 5);
        let config = small_config();
        let rows = sweep_beta(&built.examples, &built.manifest, &[0.0], &config, Some(&corpus.eval)).unwrap();
        let direct = TrainConfig { weights: LossWeights::QA_ONLY, ..config.clone() };
        let trained = train(&built.examples, &built.manifest, &direct, Some(&corpus.eval)).unwrap();
        assert_eq!(rows, vec![SweepRow { beta: 0.0, eval_acc: trained.final_accuracy() }]);

        let rows = sweep_beta(&built.examples, &built.manifest, &[0.0, 0.25, 0.5], &config, None).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(sweep_csv(&rows).lines().next(), Some("beta,eval_acc"));
        assert!(sweep_beta(&built.examples, &built.manifest, &[1.0], &config, None).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (corpus, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 20, 6);
        let bad = TrainConfig { learning_rate: 0.0, ..small_config() };
        assert!(matches!(train(&built.examples, &built.manifest, &bad, None), Err(TrainError::Config(_))));
        assert!(matches!(train(&[], &built.manifest, &small_config(), None), Err(TrainError::EmptyDataset)));
        let overlap = train(&built.examples, &built.manifest, &small_config(), Some(&corpus.train[..3]));
        assert!(matches!(overlap, Err(TrainError::Overlap(ids)) if ids.len() == 3));
    }

    #[test]
    fn divergence_is_reported_with_its_batch() {
        let (_, built) = dataset(&SyntheticSpec::default(), Mode::MtlAll, 20, 7);
        let config = TrainConfig { learning_rate: f64::MAX, ..small_config() };
        let err = train(&built.examples, &built.manifest, &config, None).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteParameters { .. }), "{err}");
    }
}
