//! Binary parameter dump.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes   "RFPARAM1"
//! header_len u64 LE
//! header     header_len bytes of UTF-8 JSON (DumpHeader)
//! values     f64 LE, tensors in w1 b1 w2 b2 w3 b3 order, row-major
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{Dims, ToyModel, TENSOR_NAMES};
use super::objective::Objective;
use super::tokenizer::Tokenizer;
use super::train::{TrainConfig, TrainedModel};

pub const MAGIC: &[u8; 8] = b"RFPARAM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub dims: Dims,
    pub shapes: Vec<TensorShape>,
    pub vocab_hash: String,
    pub vocab: Vec<String>,
    /// `"single-task"` or `"multi-task"`.
    pub objective: String,
    pub config: TrainConfig,
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a parameter dump (bad magic)")]
    Magic,
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("inconsistent dump: {0}")]
    Inconsistent(String),
}

pub fn write_params(w: &mut impl Write, trained: &TrainedModel) -> std::io::Result<()> {
    let model = &trained.model;
    let header = DumpHeader {
        dims: model.dims,
        shapes: TENSOR_NAMES
            .iter()
            .zip(model.shapes())
            .map(|(n, (rows, cols))| TensorShape { name: n.to_string(), rows, cols })
            .collect(),
        vocab_hash: trained.tokenizer.hash(),
        vocab: trained.tokenizer.tokens().to_vec(),
        objective: match trained.objective {
            Objective::SingleTask => "single-task".into(),
            Objective::MultiTask(_) => "multi-task".into(),
        },
        config: trained.config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(model.num_params() * 8);
    for t in model.tensors() {
        for p in t {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn params_bytes(trained: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    write_params(&mut out, trained).expect("writing to memory");
    out
}

pub fn read_params(r: &mut impl Read) -> Result<(DumpHeader, ToyModel, Tokenizer), DumpError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DumpError::Magic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| DumpError::Inconsistent("header length".into()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: DumpHeader = serde_json::from_slice(&json)?;
    let tokenizer = Tokenizer::from_tokens(header.vocab.clone());
    if tokenizer.hash() != header.vocab_hash || tokenizer.len() != header.dims.vocab {
        return Err(DumpError::Inconsistent("vocabulary does not match its hash or size".into()));
    }
    let mut model = ToyModel::zeros(header.dims);
    let expected: Vec<(usize, usize)> = model.shapes().to_vec();
    let recorded: Vec<(usize, usize)> = header.shapes.iter().map(|s| (s.rows, s.cols)).collect();
    if expected != recorded {
        return Err(DumpError::Inconsistent(format!("shapes {recorded:?} do not match dims")));
    }
    let mut word = [0u8; 8];
    for t in model.tensors_mut() {
        for p in t.iter_mut() {
            r.read_exact(&mut word)?;
            *p = f64::from_le_bytes(word);
        }
    }
    if r.read(&mut word)? != 0 {
        return Err(DumpError::Inconsistent("trailing bytes".into()));
    }
    Ok((header, model, tokenizer))
}
