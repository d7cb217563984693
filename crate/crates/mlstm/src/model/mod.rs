//! The multi-source LSTM model.
//!
//! One LSTM per aspect stream consumes the user's input vectors; an
//! attention head fuses the M last hidden states into a single user
//! embedding, which a softmax classifier scores. The backward pass computes
//! exact analytic gradients for every parameter, unrolled through all T
//! steps of each aspect LSTM and through the attention head.

mod backward;
mod forward;
mod params;

pub use backward::backward_user;
pub use forward::{
    attention_fuse, classify, forward_aspects, forward_user, lstm_forward, lstm_step,
    AttentionFusion, ForwardTrace, LstmStep, LstmTrace,
};
pub use params::{
    AttentionParams, ClassifierParams, LstmParams, ModelParams, FORMAT_VERSION, NUM_CLASSES,
};

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Probabilities are floored at this value before taking logs, so saturated
/// predictions keep the loss finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the true classes.
pub fn cross_entropy_loss(probs: &[Vector], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Dimension("cross-entropy of an empty batch".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability vectors but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        if y >= p.len() {
            return Err(Error::Config(format!(
                "label {y} out of range for {} classes",
                p.len()
            )));
        }
        total -= p[y].max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}
