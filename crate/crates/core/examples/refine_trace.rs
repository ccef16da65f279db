// Refines an incorrect trace: conclusion sentences go, and so does every
// mention of the gold answer.

use reasforge::answer::RuleTable;
use reasforge::refine::{refine, score_trace, ConclusionPatternSet};
use reasforge::{Classification, RawSample, ReasoningTrace};

pub fn run_example() {
    let sample = RawSample {
        sample_id: "demo".into(),
        video_ref: "videos/bedroom.mp4".into(),
        question: "Which object was tidied up by the person?".into(),
        options: ["The blanket", "The table", "The closet/cabinet"].map(String::from).to_vec(),
        gold_index: 0,
        category: None,
    };
    let raw = "###Answer: C\n\
               The person stands in front of a wooden cabinet. A blanket lies on the bed behind them.\n\
               **Conclusion**: the cabinet is tidied.\n\
               Therefore, the correct answer is C.";
    let trace = ReasoningTrace::unscored("demo", raw, "example");
    let trace = score_trace(&trace, &sample, &RuleTable::default()).unwrap();
    assert_eq!(trace.classification, Classification::Incorrect);

    let refined = refine(&trace, &sample, &ConclusionPatternSet::default()).unwrap();
    for r in &refined.removed_sentences {
        println!("removed (pattern {}): {}", r.pattern_id, r.sentence);
    }
    println!("scrubbed tokens: {:?}", refined.scrubbed_tokens);
    println!("refined: {}", refined.refined_text);
    assert_eq!(refined.refined_text, "The person stands in front of a wooden cabinet. lies on the bed behind them.");
}

fn main() {
    run_example();
}
