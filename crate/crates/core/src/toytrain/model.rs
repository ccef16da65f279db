use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

pub const DEFAULT_HIDDEN: usize = 64;
/// Rows of the answer head; samples use the first `k` of them.
pub const K_MAX: usize = crate::record::MAX_OPTIONS;
pub const DEFAULT_INIT_SCALE: f64 = 0.05;

/// Sparse vector as `(index, value)` pairs in ascending index order.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub hidden: usize,
    pub k_max: usize,
}

/// Two-headed network over a bag-of-tokens input:
///
/// ```text
/// h          = tanh(W1 x + b1)      W1: d x V
/// qa_logits  = (W2 h + b2)[..k]     W2: K_max x d
/// rea_logits = W3 h + b3            W3: V x d
/// ```
///
/// All matrices are row-major. The same struct holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub dims: Dims,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

impl ToyModel {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { vocab: v, hidden: d, k_max: k } = dims;
        Self {
            dims,
            w1: vec![0.0; d * v],
            b1: vec![0.0; d],
            w2: vec![0.0; k * d],
            b2: vec![0.0; k],
            w3: vec![0.0; v * d],
            b3: vec![0.0; v],
        }
    }

    /// Every parameter drawn from uniform(-scale, scale), tensors filled in
    /// `TENSOR_NAMES` order.
    pub fn init(dims: Dims, scale: f64, rng: &mut SplitMix64) -> Self {
        let mut m = Self::zeros(dims);
        for t in m.tensors_mut() {
            for p in t.iter_mut() {
                *p = rng.uniform(-scale, scale);
            }
        }
        m
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3]
    }

    /// `(rows, cols)` per tensor; vectors have one column.
    pub fn shapes(&self) -> [(usize, usize); 6] {
        let Dims { vocab: v, hidden: d, k_max: k } = self.dims;
        [(d, v), (d, 1), (k, d), (k, 1), (v, d), (v, 1)]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|p| p.is_finite()))
    }

    /// `self += factor * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ToyModel, factor: f64) {
        assert_eq!(self.dims, other.dims, "shape mismatch");
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (p, g) in t.iter_mut().zip(o) {
                *p += factor * g;
            }
        }
    }

    pub fn hidden_state(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let v = self.dims.vocab;
        (0..self.dims.hidden)
            .map(|r| {
                let row = &self.w1[r * v..(r + 1) * v];
                let mut pre = self.b1[r];
                for &(j, xj) in x {
                    pre += row[j] * xj;
                }
                pre.tanh()
            })
            .collect()
    }

    pub fn qa_logits(&self, h: &[f64], k: usize) -> Vec<f64> {
        assert!(k >= 1 && k <= self.dims.k_max, "k_options {k} outside 1..={}", self.dims.k_max);
        (0..k).map(|c| affine_row(&self.w2, self.b2[c], c, h)).collect()
    }

    pub fn rea_logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.dims.vocab).map(|t| affine_row(&self.w3, self.b3[t], t, h)).collect()
    }

    /// Dense-input forward pass returning `(qa_logits, rea_logits)`.
    pub fn forward(&self, x: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.dims.vocab, "input length");
        let h = self.hidden_state(&to_sparse(x));
        (self.qa_logits(&h, k), self.rea_logits(&h))
    }

    /// Arg-max answer over the first `k` options, lowest index on ties.
    pub fn predict(&self, x: &[(usize, f64)], k: usize) -> usize {
        argmax(&self.qa_logits(&self.hidden_state(x), k))
    }
}

fn affine_row(w: &[f64], bias: f64, row: usize, h: &[f64]) -> f64 {
    let d = h.len();
    let mut z = bias;
    for (wi, hi) in w[row * d..(row + 1) * d].iter().zip(h) {
        z += wi * hi;
    }
    z
}

pub fn to_sparse(x: &[f64]) -> SparseVec {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect()
}

/// Index of the largest value, the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
