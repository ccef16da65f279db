//! Softmax cross-entropy with stable log-sum-exp.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("target distribution sums to zero")]
    DegenerateTarget,
    #[error("invalid target distribution: {0}")]
    InvalidTarget(String),
    #[error("target has {target} entries but logits have {logits}")]
    Shape { logits: usize, target: usize },
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_target(sum: f64, any_negative: bool) -> Result<(), LossError> {
    if any_negative {
        return Err(LossError::InvalidTarget("negative entry".into()));
    }
    if sum == 0.0 {
        return Err(LossError::DegenerateTarget);
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(LossError::InvalidTarget(format!("sums to {sum}")));
    }
    Ok(())
}

/// `-sum_j target_j * log softmax(logits)_j` for a dense target.
pub fn cross_entropy(logits: &[f64], target: &[f64]) -> Result<f64, LossError> {
    if logits.len() != target.len() {
        return Err(LossError::Shape { logits: logits.len(), target: target.len() });
    }
    check_target(target.iter().sum(), target.iter().any(|t| *t < 0.0))?;
    let lse = log_sum_exp(logits);
    Ok(target.iter().zip(logits).filter(|(t, _)| **t != 0.0).map(|(t, l)| t * (lse - l)).sum())
}

/// Cross-entropy against a sparse target given as `(index, mass)` pairs.
pub fn cross_entropy_sparse(logits: &[f64], target: &[(usize, f64)]) -> Result<f64, LossError> {
    if let Some(&(i, _)) = target.iter().find(|(i, _)| *i >= logits.len()) {
        return Err(LossError::Shape { logits: logits.len(), target: i + 1 });
    }
    check_target(target.iter().map(|(_, t)| t).sum(), target.iter().any(|(_, t)| *t < 0.0))?;
    let lse = log_sum_exp(logits);
    Ok(target.iter().map(|&(i, t)| t * (lse - logits[i])).sum())
}

/// Cross-entropy against a one-hot target, `logsumexp(logits) - logits[gold]`.
pub fn cross_entropy_one_hot(logits: &[f64], gold: usize) -> f64 {
    log_sum_exp(logits) - logits[gold]
}
