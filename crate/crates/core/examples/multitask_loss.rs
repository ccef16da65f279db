// The multi-task loss and its exact gradient on a tiny model.

use reasforge::rng::SplitMix64;
use reasforge::toytrain::objective::mtl_loss;
use reasforge::toytrain::{Dims, EncodedExample, ToyModel};
use reasforge::LossWeights;

pub fn run_example() {
    let dims = Dims { vocab: 6, hidden: 4, k_max: 3 };
    let model = ToyModel::init(dims, 0.5, &mut SplitMix64::new(9));
    let example = EncodedExample {
        sample_id: "x".into(),
        x: vec![(0, 0.5), (3, 0.5)],
        k: 3,
        gold: 1,
        reasoning: Some(vec![(2, 0.25), (4, 0.75)]),
    };
    let (qa, _) = mtl_loss(&model, &example, LossWeights::QA_ONLY);
    for beta in [0.0, 0.25, 0.5, 0.75] {
        let w = LossWeights::from_beta(beta).unwrap();
        let (loss, grads) = mtl_loss(&model, &example, w);
        let grad_norm: f64 = grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt();
        println!("beta {beta:.2}: loss {loss:.6}, |grad| {grad_norm:.6}");
        if beta == 0.0 {
            assert_eq!(loss, qa);
            assert!(grads.w3.iter().all(|g| *g == 0.0));
        }
    }
}

fn main() {
    run_example();
}
