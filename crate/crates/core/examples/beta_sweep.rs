// Sweeps the reasoning weight beta (alpha = 1 - beta) on one dataset.

use reasforge::dataset::{build, BuildConfig};
use reasforge::toytrain::synthetic::{Benchmark, SyntheticCorpus};
use reasforge::toytrain::train::{sweep_beta, sweep_csv, TrainConfig};

pub fn run_example() {
    let bench = Benchmark::default();
    let corpus = SyntheticCorpus::generate(&bench.spec, 150, 300, 1);
    let built = build(&corpus.train, &corpus.traces, &corpus.refined, &BuildConfig::default()).unwrap();
    let config = TrainConfig { epochs: 30, ..bench.config.clone() };
    let rows =
        sweep_beta(&built.examples, &built.manifest, &[0.0, 0.25, 0.5, 0.75], &config, Some(&corpus.eval)).unwrap();
    print!("{}", sweep_csv(&rows));
    assert_eq!(rows.len(), 4);
}

fn main() {
    run_example();
}
