//! Example encoding and the two training objectives with closed-form
//! gradients.
//!
//! Batch aggregation: each loss term is averaged over the samples of the
//! batch. A sample without reasoning contributes zero to the reasoning sum
//! but still counts in the denominator, which keeps the loss linear in
//! `(alpha, beta)`.

use std::collections::HashMap;

use thiserror::Error;

use super::loss::{cross_entropy_one_hot, log_sum_exp, softmax};
use super::model::{SparseVec, ToyModel};
use super::tokenizer::Tokenizer;
use crate::dataset::split_joint_target;
use crate::record::{LossWeights, Task, TrainingExample};
use crate::text::option_letter;

/// One sample ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub sample_id: String,
    pub x: SparseVec,
    pub k: usize,
    pub gold: usize,
    /// Unigram target of the reasoning text; `None` when there is no
    /// reasoning or none of its words are in the vocabulary.
    pub reasoning: Option<SparseVec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("sample {0}: input text has no parsable option list")]
    Options(String),
    #[error("sample {sample_id}: answer {answer:?} is not one of the options")]
    Answer { sample_id: String, answer: String },
    #[error("sample {0}: reasoning example without a Qa example")]
    MissingQa(String),
    #[error("sample {0}: duplicate {1:?} example")]
    Duplicate(String, Task),
    #[error("dataset mixes joint and multi-task examples")]
    MixedTasks,
}

/// Which objective a dataset trains under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    SingleTask,
    MultiTask(LossWeights),
}

impl Objective {
    /// `(alpha, beta)` actually applied; the single-task loss weighs both
    /// terms by one.
    pub fn coefficients(self) -> (f64, f64) {
        match self {
            Objective::SingleTask => (1.0, 1.0),
            Objective::MultiTask(w) => (w.alpha, w.beta),
        }
    }
}

/// L1-normalized token counts of `input_text`, dense over the vocabulary.
pub fn featurize(example: &TrainingExample, tokenizer: &Tokenizer) -> Vec<f64> {
    let mut x = vec![0.0; tokenizer.len()];
    for (i, v) in tokenizer.distribution(&example.input_text) {
        x[i] = v;
    }
    x
}

/// Option texts listed on the `Options:` line of a rendered input.
pub fn parse_options(input_text: &str) -> Option<Vec<String>> {
    let start = input_text.rfind("Options: ")? + "Options: ".len();
    let line = input_text[start..].trim_end_matches('\n');
    let mut rest = line.strip_prefix("(A) ")?;
    let mut options = Vec::new();
    for i in 1..crate::record::MAX_OPTIONS {
        let marker = format!(" ({}) ", option_letter(i));
        match rest.find(&marker) {
            Some(at) => {
                options.push(rest[..at].to_string());
                rest = &rest[at + marker.len()..];
            }
            None => break,
        }
    }
    options.push(rest.to_string());
    Some(options)
}

fn gold_index(sample_id: &str, options: &[String], answer: &str) -> Result<usize, EncodeError> {
    options
        .iter()
        .position(|o| o == answer)
        .ok_or_else(|| EncodeError::Answer { sample_id: sample_id.into(), answer: answer.into() })
}

fn reasoning_target(tokenizer: &Tokenizer, text: &str) -> Option<SparseVec> {
    Some(tokenizer.distribution(text)).filter(|d| !d.is_empty())
}

/// Groups examples by sample, in first-appearance order, and encodes them.
pub fn encode_examples(
    examples: &[TrainingExample],
    tokenizer: &Tokenizer,
) -> Result<Vec<EncodedExample>, EncodeError> {
    let joint = examples.iter().any(|e| e.task == Task::StlJoint);
    if joint && examples.iter().any(|e| e.task != Task::StlJoint) {
        return Err(EncodeError::MixedTasks);
    }
    let mut out: Vec<EncodedExample> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut pending: Vec<&TrainingExample> = Vec::new();

    for e in examples {
        match e.task {
            Task::Qa | Task::StlJoint => {
                if slot.contains_key(e.sample_id.as_str()) {
                    return Err(EncodeError::Duplicate(e.sample_id.clone(), e.task));
                }
                let options = parse_options(&e.input_text).ok_or_else(|| EncodeError::Options(e.sample_id.clone()))?;
                let (reasoning, answer) = match e.task {
                    Task::StlJoint => {
                        let (r, a) = split_joint_target(&e.target_text);
                        (reasoning_target(tokenizer, r), a)
                    }
                    _ => (None, e.target_text.as_str()),
                };
                let gold = gold_index(&e.sample_id, &options, answer)?;
                slot.insert(&e.sample_id, out.len());
                out.push(EncodedExample {
                    sample_id: e.sample_id.clone(),
                    x: tokenizer.distribution(&e.input_text),
                    k: options.len(),
                    gold,
                    reasoning,
                });
            }
            Task::Reasoning => pending.push(e),
        }
    }
    for e in pending {
        let i = *slot.get(e.sample_id.as_str()).ok_or_else(|| EncodeError::MissingQa(e.sample_id.clone()))?;
        if out[i].reasoning.is_some() {
            return Err(EncodeError::Duplicate(e.sample_id.clone(), Task::Reasoning));
        }
        out[i].reasoning = reasoning_target(tokenizer, &e.target_text);
    }
    Ok(out)
}

/// Per-term values of one evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// `alpha * mean(C_qa) + beta * sum(C_rea) / n`.
    pub loss: f64,
    /// Mean answer cross-entropy over the batch.
    pub c_qa: f64,
    /// Mean reasoning cross-entropy over samples that have reasoning.
    pub c_rea: Option<f64>,
}

/// Loss and exact gradient of a batch. With `beta == 0` the reasoning head
/// is never evaluated, so its gradient is exactly zero and the update to
/// the shared layers equals that of an answer-only objective.
pub fn batch_loss(model: &ToyModel, batch: &[&EncodedExample], alpha: f64, beta: f64) -> (LossTerms, ToyModel) {
    let mut grads = ToyModel::zeros(model.dims);
    let terms = batch_loss_into(model, batch, alpha, beta, &mut grads);
    (terms, grads)
}

/// As [`batch_loss`], writing the gradient into a reusable buffer.
pub fn batch_loss_into(
    model: &ToyModel,
    batch: &[&EncodedExample],
    alpha: f64,
    beta: f64,
    grads: &mut ToyModel,
) -> LossTerms {
    assert!(!batch.is_empty(), "empty batch");
    assert_eq!(grads.dims, model.dims, "gradient buffer shape");
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut qa_sum = 0.0;
    let mut rea_sum = 0.0;
    let mut rea_count = 0usize;
    for ex in batch {
        let (c_qa, c_rea) = accumulate(model, ex, alpha * inv_n, beta * inv_n, beta != 0.0, grads);
        qa_sum += c_qa;
        if let Some(c) = c_rea {
            rea_sum += c;
            rea_count += 1;
        }
    }
    let c_qa = qa_sum * inv_n;
    let loss = if beta != 0.0 { alpha * c_qa + beta * (rea_sum * inv_n) } else { alpha * c_qa };
    let c_rea = (rea_count > 0).then(|| rea_sum / rea_count as f64);
    LossTerms { loss, c_qa, c_rea }
}

/// Multi-task loss of a single sample, `alpha * C_qa + beta * C_rea`.
pub fn mtl_loss(model: &ToyModel, example: &EncodedExample, weights: LossWeights) -> (f64, ToyModel) {
    let (terms, grads) = batch_loss(model, &[example], weights.alpha, weights.beta);
    (terms.loss, grads)
}

/// Single-task loss of a joint example: reasoning-token cross-entropy plus
/// answer cross-entropy, unweighted.
pub fn stl_loss(model: &ToyModel, example: &EncodedExample) -> (f64, ToyModel) {
    let (terms, grads) = batch_loss(model, &[example], 1.0, 1.0);
    (terms.loss, grads)
}

/// Adds `qa_scale * dC_qa + rea_scale * dC_rea` to `grads` and returns the
/// unscaled cross-entropies. The reasoning branch runs only when
/// `with_reasoning` is set and the sample has a target.
fn accumulate(
    model: &ToyModel,
    ex: &EncodedExample,
    qa_scale: f64,
    rea_scale: f64,
    with_reasoning: bool,
    grads: &mut ToyModel,
) -> (f64, Option<f64>) {
    let d = model.dims.hidden;
    let v = model.dims.vocab;
    let h = model.hidden_state(&ex.x);

    let qa = model.qa_logits(&h, ex.k);
    let c_qa = cross_entropy_one_hot(&qa, ex.gold);
    let mut g_qa = softmax(&qa);
    g_qa[ex.gold] -= 1.0;
    for g in &mut g_qa {
        *g *= qa_scale;
    }

    let mut dh = vec![0.0; d];
    for (c, gc) in g_qa.iter().enumerate() {
        let row = &model.w2[c * d..(c + 1) * d];
        for r in 0..d {
            dh[r] += row[r] * gc;
        }
    }

    let mut c_rea = None;
    if let (true, Some(target)) = (with_reasoning, &ex.reasoning) {
        let rea = model.rea_logits(&h);
        let lse = log_sum_exp(&rea);
        c_rea = Some(target.iter().map(|&(i, t)| t * (lse - rea[i])).sum());
        let mut g_rea: Vec<f64> = rea.iter().map(|z| (z - lse).exp()).collect();
        for &(i, t) in target {
            g_rea[i] -= t;
        }
        for g in &mut g_rea {
            *g *= rea_scale;
        }
        for (tok, gt) in g_rea.iter().enumerate() {
            let row = &model.w3[tok * d..(tok + 1) * d];
            let grow = &mut grads.w3[tok * d..(tok + 1) * d];
            for r in 0..d {
                dh[r] += row[r] * gt;
                grow[r] += gt * h[r];
            }
            grads.b3[tok] += gt;
        }
    }

    for (c, gc) in g_qa.iter().enumerate() {
        let grow = &mut grads.w2[c * d..(c + 1) * d];
        for r in 0..d {
            grow[r] += gc * h[r];
        }
        grads.b2[c] += gc;
    }

    for r in 0..d {
        let dpre = dh[r] * (1.0 - h[r] * h[r]);
        let grow = &mut grads.w1[r * v..(r + 1) * v];
        for &(j, xj) in &ex.x {
            grow[j] += dpre * xj;
        }
        grads.b1[r] += dpre;
    }
    (c_qa, c_rea)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::toytrain::model::Dims;

    pub(crate) fn random_example(rng: &mut SplitMix64, v: usize, k: usize, with_reasoning: bool) -> EncodedExample {
        let mut x: SparseVec = Vec::new();
        let mut rea: SparseVec = Vec::new();
        for j in 0..v {
            if rng.bernoulli(0.3) {
                x.push((j, rng.next_f64() + 0.01));
            }
            if rng.bernoulli(0.2) {
                rea.push((j, rng.next_f64() + 0.01));
            }
        }
        if rea.is_empty() {
            rea.push((rng.below(v), 1.0));
        }
        let sx: f64 = x.iter().map(|p| p.1).sum();
        let sr: f64 = rea.iter().map(|p| p.1).sum();
        x.iter_mut().for_each(|p| p.1 /= sx);
        rea.iter_mut().for_each(|p| p.1 /= sr);
        EncodedExample { sample_id: "r".into(), x, k, gold: rng.below(k), reasoning: with_reasoning.then_some(rea) }
    }

    pub(crate) fn small_model(rng: &mut SplitMix64) -> ToyModel {
        ToyModel::init(Dims { vocab: 32, hidden: 8, k_max: 4 }, 0.5, rng)
    }

    /// Largest relative error between `grads` and central differences
    /// with step 1e-5, over every parameter.
    pub(crate) fn max_rel_error(m: &ToyModel, ex: &EncodedExample, alpha: f64, beta: f64, grads: &ToyModel) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = m.clone();
        for t in 0..6 {
            for i in 0..m.tensors()[t].len() {
                let orig = m.tensors()[t][i];
                probe.tensors_mut()[t][i] = orig + h;
                let up = batch_loss(&probe, &[ex], alpha, beta).0.loss;
                probe.tensors_mut()[t][i] = orig - h;
                let down = batch_loss(&probe, &[ex], alpha, beta).0.loss;
                probe.tensors_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensors()[t][i];
                let err = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::*;
    use super::*;
    use crate::dataset::{joint_target, render_input};
    use crate::record::RawSample;
    use crate::rng::SplitMix64;
    use crate::toytrain::loss::{cross_entropy, cross_entropy_sparse};

    fn sample(id: &str, opts: &[&str], gold: usize) -> RawSample {
        RawSample {
            sample_id: id.into(),
            video_ref: "v".into(),
            question: "What is held?".into(),
            options: opts.iter().map(|s| s.to_string()).collect(),
            gold_index: gold,
            category: None,
        }
    }

    #[test]
    fn featurize_counts_and_normalizes() {
        let t = Tokenizer::from_tokens(vec!["a".into(), "b".into(), "c".into()]);
        let ex = |text: &str| TrainingExample {
            sample_id: "s".into(),
            task: Task::Qa,
            input_text: text.into(),
            target_text: String::new(),
        };
        assert_eq!(featurize(&ex("a a b"), &t), vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(featurize(&ex("zz yy"), &t), vec![0.0; 3]);
        assert_eq!(featurize(&ex("b a, c a"), &t), featurize(&ex("a c a b"), &t));
    }

    #[test]
    fn options_round_trip_through_rendered_input() {
        let s = sample("s", &["The red cup", "A (B) trap", "x"], 1);
        assert_eq!(parse_options(&render_input(&s)).unwrap(), vec!["The red cup", "A (B) trap", "x"]);
        assert_eq!(parse_options("no list"), None);
    }

    #[test]
    fn encode_multi_task_and_joint() {
        let t = Tokenizer::build(["red cup blue bowl reasoning words"], 100);
        let s = sample("s1", &["red cup", "blue bowl"], 1);
        let input = render_input(&s);
        let mtl = vec![
            TrainingExample {
                sample_id: "s1".into(),
                task: Task::Qa,
                input_text: input.clone(),
                target_text: "blue bowl".into(),
            },
            TrainingExample {
                sample_id: "s1".into(),
                task: Task::Reasoning,
                input_text: input.clone(),
                target_text: "reasoning words".into(),
            },
        ];
        let enc = encode_examples(&mtl, &t).unwrap();
        assert_eq!(enc.len(), 1);
        assert_eq!((enc[0].k, enc[0].gold), (2, 1));
        assert_eq!(enc[0].reasoning.as_ref().unwrap().len(), 2);

        let joint = vec![TrainingExample {
            sample_id: "s1".into(),
            task: Task::StlJoint,
            input_text: input.clone(),
            target_text: joint_target("reasoning words", "blue bowl"),
        }];
        assert_eq!(encode_examples(&joint, &t).unwrap(), enc);

        let answer_only = vec![TrainingExample { target_text: "blue bowl".into(), ..joint[0].clone() }];
        assert_eq!(encode_examples(&answer_only, &t).unwrap()[0].reasoning, None);

        let bad = vec![TrainingExample { target_text: "green".into(), ..mtl[0].clone() }];
        assert!(matches!(encode_examples(&bad, &t), Err(EncodeError::Answer { .. })));
        assert!(matches!(encode_examples(&mtl[1..], &t), Err(EncodeError::MissingQa(_))));
        let mixed = vec![mtl[0].clone(), TrainingExample { sample_id: "s2".into(), ..joint[0].clone() }];
        assert_eq!(encode_examples(&mixed, &t), Err(EncodeError::MixedTasks));
    }

    #[test]
    fn qa_only_weights_reduce_to_answer_cross_entropy() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let m = small_model(&mut rng);
            let ex = random_example(&mut rng, 32, 4, true);
            let (loss, g) = mtl_loss(&m, &ex, LossWeights::QA_ONLY);
            let (qa, _) = m.forward(&dense(&ex.x, 32), ex.k);
            let mut one_hot = vec![0.0; ex.k];
            one_hot[ex.gold] = 1.0;
            assert_eq!(loss, cross_entropy(&qa, &one_hot).unwrap());
            assert!(g.w3.iter().chain(&g.b3).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn stl_without_reasoning_is_answer_loss() {
        let mut rng = SplitMix64::new(12);
        let m = small_model(&mut rng);
        let ex = random_example(&mut rng, 32, 3, false);
        let (loss, _) = stl_loss(&m, &ex);
        let (qa, _) = m.forward(&dense(&ex.x, 32), 3);
        assert_eq!(loss, cross_entropy_one_hot(&qa, ex.gold));
    }

    #[test]
    fn stl_is_sum_of_both_cross_entropies() {
        let mut rng = SplitMix64::new(13);
        let m = small_model(&mut rng);
        let ex = random_example(&mut rng, 32, 4, true);
        let (qa, rea) = m.forward(&dense(&ex.x, 32), 4);
        let expected =
            cross_entropy_sparse(&rea, ex.reasoning.as_ref().unwrap()).unwrap() + cross_entropy_one_hot(&qa, ex.gold);
        assert!((stl_loss(&m, &ex).0 - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_mean_counts_samples_without_reasoning() {
        let mut rng = SplitMix64::new(14);
        let m = small_model(&mut rng);
        let a = random_example(&mut rng, 32, 4, true);
        let b = random_example(&mut rng, 32, 4, false);
        let (terms, _) = batch_loss(&m, &[&a, &b], 0.0, 1.0);
        let (rea_a, _) = batch_loss(&m, &[&a], 0.0, 1.0);
        assert!((terms.loss - rea_a.loss / 2.0).abs() < 1e-15);
        assert_eq!(terms.c_rea, rea_a.c_rea);
    }

    fn dense(x: &[(usize, f64)], v: usize) -> Vec<f64> {
        let mut out = vec![0.0; v];
        for &(i, val) in x {
            out[i] = val;
        }
        out
    }
}
