// Example counts for every dataset mode, built from one synthetic corpus.

use reasforge::dataset::{build, BuildConfig, Mode};
use reasforge::toytrain::synthetic::{SyntheticCorpus, SyntheticSpec};

pub fn run_example() {
    let corpus = SyntheticCorpus::generate(&SyntheticSpec::default(), 120, 10, 3);
    println!("{:<8} {:>8} {:>6} {:>10}", "mode", "examples", "qa", "reasoning");
    for mode in Mode::ALL {
        for cr_fraction in [1.0, 0.5] {
            if cr_fraction < 1.0 && mode == Mode::StlQa {
                continue;
            }
            let config = BuildConfig { mode, cr_fraction, seed: 7, ..Default::default() };
            let built = build(&corpus.train, &corpus.traces, &corpus.refined, &config).unwrap();
            let c = &built.manifest.counts;
            println!(
                "{:<8} {:>8} {:>6} {:>10}  (cr fraction {cr_fraction}, {} of {} correct traces kept)",
                mode.as_str(),
                c.total_examples,
                c.qa_examples,
                c.reasoning_examples,
                c.cr_selected,
                c.cr_count
            );
            assert_eq!(c.qa_examples, 120);
        }
    }
}

fn main() {
    run_example();
}
