// Trains the two-headed model on a multi-task dataset and writes a
// parameter dump.

use reasforge::dataset::{build, BuildConfig};
use reasforge::toytrain::synthetic::{Benchmark, SyntheticCorpus};
use reasforge::toytrain::train::{history_csv, train, TrainConfig};
use reasforge::toytrain::{params_bytes, read_params};

pub fn run_example() {
    let bench = Benchmark::default();
    let corpus = SyntheticCorpus::generate(&bench.spec, 150, 300, 0);
    let built = build(&corpus.train, &corpus.traces, &corpus.refined, &BuildConfig::default()).unwrap();
    let config = TrainConfig { epochs: 150, ..bench.config.clone() };
    let trained = train(&built.examples, &built.manifest, &config, Some(&corpus.eval)).unwrap();
    let csv = history_csv(&trained.history);
    for line in csv.lines().step_by(25) {
        println!("{line}");
    }
    println!("final eval accuracy {:.3}", trained.final_accuracy());

    let bytes = params_bytes(&trained);
    let (header, model, tokenizer) = read_params(&mut bytes.as_slice()).unwrap();
    println!("dump: {} bytes, {} parameters, vocab {}", bytes.len(), model.num_params(), header.vocab.len());
    assert_eq!(model, trained.model);
    assert_eq!(tokenizer, trained.tokenizer);
    assert!(trained.final_accuracy() > 0.3);
}

fn main() {
    run_example();
}
