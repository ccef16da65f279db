//! Seeded stand-in for an MLLM reasoning generator.

use crate::record::{RawSample, ReasoningTrace};
use crate::rng::SplitMix64;
use crate::text::option_letter;

pub const MOCK_GENERATOR_ID: &str = "mock-mllm";

const OBSERVATIONS: [&str; 8] = [
    "The frames show a person moving around an indoor room.",
    "In the first frame the person stands near a doorway.",
    "The lighting suggests the clip was recorded during the day.",
    "The person's hands are busy for most of the clip.",
    "Several household items are visible on the shelves in the background.",
    "In the later frames the person turns toward the camera.",
    "There is no sign of a second person in the scene.",
    "The camera stays fixed for the whole clip.",
];

/// Trace with 2–5 observation sentences and one answer-bearing conclusion.
///
/// The prediction equals the gold option with probability `1 - error_rate`
/// and is otherwise uniform over the other options. Incorrect traces mention
/// the gold answer text in one sentence. Draws come from a per-sample
/// stream, so a sample's trace does not depend on corpus order.
pub fn mock_generate(sample: &RawSample, error_rate: f64, seed: u64) -> ReasoningTrace {
    assert!((0.0..=1.0).contains(&error_rate), "error_rate {error_rate} not in [0, 1]");
    let mut rng = SplitMix64::for_stream(seed, &sample.sample_id);
    let k = sample.options.len();
    let wrong = k > 1 && rng.bernoulli(error_rate);
    let predicted = if wrong {
        let offset = 1 + rng.below(k - 1);
        (sample.gold_index + offset) % k
    } else {
        sample.gold_index
    };

    let mut pool: Vec<usize> = (0..OBSERVATIONS.len()).collect();
    rng.shuffle(&mut pool);
    let n_obs = 2 + rng.below(4);
    let mut sentences: Vec<String> = pool[..n_obs].iter().map(|&i| OBSERVATIONS[i].to_string()).collect();

    let pred_text = &sample.options[predicted];
    sentences.push(format!("The person seems to interact with {} at some point.", lower_first(pred_text)));
    if wrong {
        let at = rng.below(sentences.len());
        sentences.insert(
            at,
            format!("Something like {} appears briefly near the edge of the frame.", lower_first(sample.gold_text())),
        );
    }

    let letter = option_letter(predicted);
    let conclusion = match rng.below(5) {
        0 => format!("###Answer: {letter}"),
        1 => format!("**Answer**: {letter}"),
        2 => format!("Therefore, the correct answer is {letter}."),
        3 => format!("Thus, the correct answer is {letter}."),
        _ => format!("The correct answer is {letter}: {pred_text}."),
    };

    let mut text = sentences.join(" ");
    text.push('\n');
    text.push_str(&conclusion);
    ReasoningTrace::unscored(&sample.sample_id, text, MOCK_GENERATOR_ID)
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Mock traces for a whole corpus, in sample order.
pub fn mock_corpus(samples: &[RawSample], error_rate: f64, seed: u64) -> Vec<ReasoningTrace> {
    samples.iter().map(|s| mock_generate(s, error_rate, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::RuleTable;
    use crate::record::Classification;
    use crate::refine::score_trace;

    fn samples(n: usize) -> Vec<RawSample> {
        (0..n)
            .map(|i| RawSample {
                sample_id: format!("m{i}"),
                video_ref: format!("v{i}"),
                question: "What did the person pick up?".into(),
                options: vec![
                    "The blanket".into(),
                    "The cup".into(),
                    "The book".into(),
                    "The phone".into(),
                    "The bag".into(),
                ],
                gold_index: i % 5,
                category: None,
            })
            .collect()
    }

    fn classes(samples: &[RawSample], error_rate: f64, seed: u64) -> Vec<Classification> {
        let rules = RuleTable::default();
        samples
            .iter()
            .map(|s| score_trace(&mock_generate(s, error_rate, seed), s, &rules).unwrap().classification)
            .collect()
    }

    #[test]
    fn zero_error_rate_is_all_correct() {
        let s = samples(500);
        assert!(classes(&s, 0.0, 1).iter().all(|c| *c == Classification::Correct));
    }

    #[test]
    fn full_error_rate_is_all_incorrect() {
        let s = samples(500);
        assert!(classes(&s, 1.0, 1).iter().all(|c| *c == Classification::Incorrect));
    }

    #[test]
    fn correct_fraction_concentrates() {
        let s = samples(10_000);
        let correct = classes(&s, 0.33, 2024).iter().filter(|c| **c == Classification::Correct).count();
        let frac = correct as f64 / s.len() as f64;
        assert!((frac - 0.67).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn deterministic_per_seed() {
        let s = samples(50);
        assert_eq!(mock_corpus(&s, 0.3, 9), mock_corpus(&s, 0.3, 9));
        assert_ne!(mock_corpus(&s, 0.3, 9), mock_corpus(&s, 0.3, 10));
    }

    #[test]
    fn incorrect_traces_embed_gold_text() {
        let s = samples(200);
        for smp in &s {
            let t = mock_generate(smp, 1.0, 3);
            assert!(crate::refine::contains_gold(&t.raw_text, smp.gold_text()));
        }
    }
}
