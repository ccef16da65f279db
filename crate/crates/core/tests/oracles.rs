//! Checks against values frozen from the scripts in `tests/oracles/`.

use reasforge::toytrain::loss::{cross_entropy, cross_entropy_one_hot, cross_entropy_sparse, softmax};
use reasforge::toytrain::synthetic::SyntheticSpec;
use serde::Deserialize;

#[derive(Deserialize)]
struct CeCase {
    logits: Vec<f64>,
    target: Vec<f64>,
    cross_entropy: f64,
    softmax: Vec<f64>,
}

#[test]
fn cross_entropy_matches_high_precision_oracle() {
    let cases: Vec<CeCase> =
        serde_json::from_str(include_str!("oracles/cross_entropy_mpmath.json")).expect("oracle json");
    assert_eq!(cases.len(), 60);
    let mut worst = 0.0f64;
    for c in &cases {
        let dense = cross_entropy(&c.logits, &c.target).unwrap();
        let sparse: Vec<(usize, f64)> = c.target.iter().copied().enumerate().filter(|&(_, t)| t != 0.0).collect();
        let via_sparse = cross_entropy_sparse(&c.logits, &sparse).unwrap();
        for got in [dense, via_sparse] {
            let err = (got - c.cross_entropy).abs();
            worst = worst.max(err);
            assert!(err < 1e-12, "got {got}, oracle {}, error {err}", c.cross_entropy);
        }
        if let [(gold, _)] = sparse[..] {
            assert!((cross_entropy_one_hot(&c.logits, gold) - c.cross_entropy).abs() < 1e-12);
        }
        for (p, q) in softmax(&c.logits).iter().zip(&c.softmax) {
            assert!((p - q).abs() < 1e-15, "{p} vs {q}");
        }
    }
    eprintln!("worst cross-entropy error {worst:e}");
}

#[derive(Deserialize)]
struct BayesCase {
    classes: usize,
    cues: usize,
    cue_accuracy: f64,
    value: f64,
}

#[test]
fn bayes_accuracy_matches_brute_force_oracle() {
    let cases: Vec<BayesCase> =
        serde_json::from_str(include_str!("oracles/synthetic_bayes.json")).expect("oracle json");
    for c in &cases {
        let spec =
            SyntheticSpec { classes: c.classes, cues: c.cues, cue_accuracy: c.cue_accuracy, ..Default::default() };
        let got = spec.bayes_accuracy();
        assert!((got - c.value).abs() < 1e-12, "{} classes {} cues: {got} vs {}", c.classes, c.cues, c.value);
    }
    let benchmark = SyntheticSpec::default();
    assert_eq!(
        (benchmark.classes, benchmark.cues, benchmark.cue_accuracy),
        (cases[0].classes, cases[0].cues, cases[0].cue_accuracy)
    );
    assert!((benchmark.bayes_accuracy() - 97.0 / 144.0).abs() < 1e-12);
}
