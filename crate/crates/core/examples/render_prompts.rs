// Renders the generation prompt and frame references for one sample.

use reasforge::generation::{PromptRequest, PromptTemplate, DEFAULT_FRAMES, DEFAULT_TOTAL_FRAMES};
use reasforge::RawSample;

pub fn run_example() {
    let sample = RawSample {
        sample_id: "demo-1".into(),
        video_ref: "videos/kitchen.mp4".into(),
        question: "What did the person pick up after opening the fridge?".into(),
        options: vec!["A bottle".into(), "An apple".into(), "A plate".into()],
        gold_index: 0,
        category: Some("temporal".into()),
    };
    let template = PromptTemplate::default();
    let request = PromptRequest::new(&sample, &template, DEFAULT_TOTAL_FRAMES, DEFAULT_FRAMES);
    println!("template {} ({})", template.version, &template.hash()[..12]);
    println!("{}", request.prompt_text);
    for f in &request.frame_refs {
        println!("  frame {f}");
    }
    assert_eq!(request.frame_refs.len(), DEFAULT_FRAMES);
    assert!(request.prompt_text.contains("(B) An apple"));
}

fn main() {
    run_example();
}
