//! Desk-scale training: a two-headed network that answers from a
//! bag-of-tokens input and, optionally, predicts the unigram distribution
//! of the reasoning text.
//!
//! The single-task objective adds the two cross-entropies with equal
//! weight. The multi-task objective weighs them with `alpha` and `beta`.
//! Gradients are closed-form.

pub mod dump;
pub mod loss;
pub mod model;
pub mod objective;
pub mod synthetic;
pub mod tokenizer;
pub mod train;

pub use dump::{params_bytes, read_params, write_params, DumpError, DumpHeader};
pub use loss::{cross_entropy, cross_entropy_sparse, softmax, LossError};
pub use model::{Dims, SparseVec, ToyModel, K_MAX};
pub use objective::{
    batch_loss, encode_examples, featurize, mtl_loss, stl_loss, EncodeError, EncodedExample, LossTerms, Objective,
};
pub use tokenizer::Tokenizer;
pub use train::{
    accuracy, encode_samples, history_csv, sweep_beta, sweep_csv, train, EpochRecord, SweepRow, TrainConfig,
    TrainError, TrainedModel, Trainer,
};
