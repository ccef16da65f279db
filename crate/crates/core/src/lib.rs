//! Curation and desk-scale training toolchain for MLLM-generated VideoQA
//! reasoning traces.
//!
//! The pipeline has three phases that communicate only through files:
//!
//! - **generation**: render the frame-sampling prompt and collect raw traces
//!   from a chat-completions endpoint or a seeded mock.
//! - **classification and refinement** ([`answer`], [`refine`]): extract the
//!   predicted option, label each trace Correct/Incorrect, strip conclusion
//!   sentences and (for incorrect traces) gold-answer tokens.
//! - **learning** ([`dataset`], [`toytrain`]): emit single-task or multi-task
//!   datasets and train a small two-headed model with exact gradients.
//!
//! [`metrics`] computes corpus and model statistics; [`cli`] wires the stages
//! into the `reasforge` command.

pub mod answer;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod generation;
pub mod metrics;
pub mod record;
pub mod refine;
pub mod rng;
pub mod text;
pub mod toytrain;

pub use record::{
    Classification, ExtractionMethod, LossWeights, RawSample, ReasoningTrace, RefinedTrace, Task, TrainingExample,
};
