//! Dense feed-forward networks with hand-written backward passes.
//!
//! Everything is `f64`. Networks cache the activations of the last
//! [`Mlp::forward`] call and consume that cache in [`Mlp::backward`], which
//! accumulates into each [`ParamTensor::grad`]. [`AdamState::step`] applies
//! and clears those gradients.

mod adam;
mod gradcheck;
mod mlp;
mod tensor;

pub use adam::{clip_grad_norm, AdamState};
pub use gradcheck::{central_difference, grad_check, FD_STEP};
pub use mlp::{Activation, Head, Mlp, MlpSpec};
pub use tensor::{ParamTensor, Parameterized};

use crate::{Error, Result};

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax_temp(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::config(format!(
            "softmax temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::config("softmax of an empty vector"));
    }
    Ok(softmax_unchecked(logits, temperature))
}

pub(crate) fn softmax_unchecked(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&z| ((z - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// `log softmax(logits)` at temperature 1.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Pulls an upstream gradient w.r.t. `probs = softmax(z / temperature)` back to `z`.
pub fn softmax_backward(probs: &[f64], upstream: &[f64], temperature: f64) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(upstream).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(upstream)
        .map(|(p, g)| p * (g - dot) / temperature)
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
