// Mock generation, classification and generator accuracy by category.

use reasforge::answer::RuleTable;
use reasforge::generation::mock_corpus;
use reasforge::metrics::{generator_accuracy, stats_table, RefinementSummary};
use reasforge::refine::{refine_corpus, score_trace, ConclusionPatternSet, RefineOptions};
use reasforge::rng::SplitMix64;
use reasforge::RawSample;

pub fn samples(n: usize, seed: u64) -> Vec<RawSample> {
    let objects = ["cup", "book", "phone", "towel", "shoe", "box", "bag", "door"];
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let mut pool = objects.to_vec();
            rng.shuffle(&mut pool);
            RawSample {
                sample_id: format!("s{i:04}"),
                video_ref: format!("videos/{i}.mp4"),
                question: "Which object did the person hold?".into(),
                options: pool[..4].iter().map(|o| format!("The {o}")).collect(),
                gold_index: rng.below(4),
                category: Some(["causal", "temporal", "descriptive"][i % 3].into()),
            }
        })
        .collect()
}

pub fn run_example() {
    let samples = samples(600, 1);
    let rules = RuleTable::default();
    let traces: Vec<_> =
        mock_corpus(&samples, 0.33, 0).iter().zip(&samples).map(|(t, s)| score_trace(t, s, &rules).unwrap()).collect();
    let (refined, _) =
        refine_corpus(&traces, &samples, &ConclusionPatternSet::default(), RefineOptions::default()).unwrap();
    let stats =
        generator_accuracy(&traces, &samples).unwrap().with_refinement(RefinementSummary::from_refined(&refined));
    print!("{}", stats_table(&stats));
    assert_eq!(stats.total, 600);
    assert!((stats.accuracy() - 0.67).abs() < 0.06);
}

fn main() {
    run_example();
}
