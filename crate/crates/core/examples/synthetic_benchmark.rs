// One seed of the synthetic multi-task benchmark: QA-only training, the
// balanced multi-task objective and single-task training on original traces.

use reasforge::toytrain::synthetic::Benchmark;

pub fn run_example() {
    let bench = Benchmark::default();
    println!("Bayes accuracy of the task: {:.4}", bench.spec.bayes_accuracy());
    let acc = bench.run_seed(0).unwrap();
    println!("beta = 0            {:.4}", acc.qa_only);
    println!("beta = 0.5          {:.4}", acc.balanced);
    println!("single-task, orig.  {:.4}", acc.stl_original);
    assert!(acc.balanced <= bench.spec.bayes_accuracy() + 0.05);
}

fn main() {
    run_example();
}
