//! Forward pass: LSTM recurrence, attention fusion, classification.
//!
//! Every intermediate needed by the backward pass is cached in the returned
//! traces, and the streaming scorer advances the same [`lstm_step`] used
//! here, so prefix probabilities agree bit-for-bit between the two paths.

use crate::error::{Error, Result};
use crate::ingestion::AspectSequences;
use crate::numerics::{sigmoid, stable_softmax, Vector};

use super::params::{AttentionParams, ClassifierParams, LstmParams, ModelParams};

/// One step of the recurrence with its gate activations.
#[derive(Clone, Debug)]
pub struct LstmStep {
    pub x: Vector,
    pub c_tilde: Vector,
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

/// The full unrolled recurrence of one aspect LSTM.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_h(&self) -> &Vector {
        &self.steps.last().expect("trace has at least one step").h
    }

    pub fn last_c(&self) -> &Vector {
        &self.steps.last().expect("trace has at least one step").c
    }
}

/// Attention intermediates: per-aspect projections z, the weights alpha on
/// the probability simplex, and the fused embedding s.
#[derive(Clone, Debug)]
pub struct AttentionFusion {
    pub z: Vec<Vector>,
    pub alpha: Vector,
    pub embedding: Vector,
}

/// Everything one forward pass computes, cached for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub aspects: Vec<LstmTrace>,
    pub fusion: AttentionFusion,
    pub probs: Vector,
}

impl ForwardTrace {
    /// The user embedding s (the attention-weighted hidden-state sum).
    pub fn embedding(&self) -> &Vector {
        &self.fusion.embedding
    }

    pub fn alpha(&self) -> &Vector {
        &self.fusion.alpha
    }

    /// Sequence length T of the underlying aspect streams.
    pub fn len(&self) -> usize {
        self.aspects.first().map_or(0, LstmTrace::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Predicted class: argmax probability, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for k in 1..self.probs.len() {
            if self.probs[k] > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

fn gate_preactivation(
    w: &crate::numerics::Matrix,
    u: &crate::numerics::Matrix,
    b: &Vector,
    x: &Vector,
    h_prev: &Vector,
) -> Vector {
    let mut a = w.matvec(x);
    a.add_assign(&u.matvec(h_prev));
    a.add_assign(b);
    a
}

/// Advance the recurrence one step:
///
/// ```text
/// c~ = tanh(W_c x + U_c h + b_c)      i = sigma(W_i x + U_i h + b_i)
/// f  = sigma(W_f x + U_f h + b_f)     o = sigma(W_o x + U_o h + b_o)
/// c  = i (*) c~ + f (*) c_prev        h = o (*) tanh(c)
/// ```
pub fn lstm_step(
    params: &LstmParams,
    x: &Vector,
    h_prev: &Vector,
    c_prev: &Vector,
) -> Result<LstmStep> {
    let (d, h) = (params.input_dim(), params.hidden());
    if x.len() != d || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Dimension(format!(
            "lstm_step expects input {d} and state {h}, got input {} and state {}/{}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let c_tilde = gate_preactivation(&params.w_c, &params.u_c, &params.b_c, x, h_prev)
        .map(f64::tanh);
    let i = gate_preactivation(&params.w_i, &params.u_i, &params.b_i, x, h_prev).map(sigmoid);
    let f = gate_preactivation(&params.w_f, &params.u_f, &params.b_f, x, h_prev).map(sigmoid);
    let o = gate_preactivation(&params.w_o, &params.u_o, &params.b_o, x, h_prev).map(sigmoid);
    let c: Vector = (0..h).map(|j| i[j] * c_tilde[j] + f[j] * c_prev[j]).collect();
    let tanh_c = c.map(f64::tanh);
    let hidden: Vector = (0..h).map(|j| o[j] * tanh_c[j]).collect();
    Ok(LstmStep { x: x.clone(), c_tilde, i, f, o, c, tanh_c, h: hidden })
}

/// Run the recurrence over a whole sequence from the zero initial state.
pub fn lstm_forward(params: &LstmParams, seq: &[Vector]) -> Result<LstmTrace> {
    if seq.is_empty() {
        return Err(Error::Dimension("lstm_forward needs at least one input".into()));
    }
    let zero = Vector::zeros(params.hidden());
    let mut steps: Vec<LstmStep> = Vec::with_capacity(seq.len());
    for x in seq {
        let step = match steps.last() {
            Some(prev) => lstm_step(params, x, &prev.h, &prev.c)?,
            None => lstm_step(params, x, &zero, &zero)?,
        };
        steps.push(step);
    }
    Ok(LstmTrace { steps })
}

/// Fuse M hidden states into one embedding:
/// z_m = tanh(W_a h_m), alpha = softmax_m(u_a . z_m), s = sum_m alpha_m h_m.
pub fn attention_fuse(params: &AttentionParams, hidden: &[&Vector]) -> Result<AttentionFusion> {
    if hidden.is_empty() {
        return Err(Error::Dimension("attention over zero hidden states".into()));
    }
    let h = params.u_a.len();
    if params.w_a.rows() != h || params.w_a.cols() != h {
        return Err(Error::Dimension("attention projection must be square h x h".into()));
    }
    for v in hidden {
        if v.len() != h {
            return Err(Error::Dimension(format!(
                "attention expects hidden dim {h}, got {}",
                v.len()
            )));
        }
    }
    let z: Vec<Vector> = hidden.iter().map(|hm| params.w_a.matvec(hm).map(f64::tanh)).collect();
    let scores: Vector = z.iter().map(|zm| params.u_a.dot(zm)).collect();
    let alpha = stable_softmax(&scores)?;
    let mut embedding = Vector::zeros(h);
    for (m, hm) in hidden.iter().enumerate() {
        embedding.axpy(alpha[m], hm);
    }
    Ok(AttentionFusion { z, alpha, embedding })
}

/// Class probabilities of an embedding: softmax over w_k . s + b_k.
pub fn classify(params: &ClassifierParams, embedding: &Vector) -> Result<Vector> {
    if params.weights.cols() != embedding.len() {
        return Err(Error::Dimension(format!(
            "classifier expects embedding dim {}, got {}",
            params.weights.cols(),
            embedding.len()
        )));
    }
    let mut logits = params.weights.matvec(embedding);
    logits.add_assign(&params.bias);
    stable_softmax(&logits)
}

/// Forward pass over raw aspect streams (one slice of inputs per aspect).
pub fn forward_aspects(params: &ModelParams, sequences: &[&[Vector]]) -> Result<ForwardTrace> {
    if sequences.len() != params.num_aspects() {
        return Err(Error::Dimension(format!(
            "model has {} aspects, input has {}",
            params.num_aspects(),
            sequences.len()
        )));
    }
    let t = sequences[0].len();
    if sequences.iter().any(|s| s.len() != t) {
        return Err(Error::Dimension("aspect sequences differ in length".into()));
    }
    let mut aspects = Vec::with_capacity(sequences.len());
    for (lstm, seq) in params.lstms.iter().zip(sequences) {
        aspects.push(lstm_forward(lstm, seq)?);
    }
    let last_hidden: Vec<&Vector> = aspects.iter().map(LstmTrace::last_h).collect();
    let fusion = attention_fuse(&params.attention, &last_hidden)?;
    let probs = classify(&params.classifier, &fusion.embedding)?;
    Ok(ForwardTrace { aspects, fusion, probs })
}

/// Forward pass for one user's aspect bundle.
pub fn forward_user(params: &ModelParams, aspects: &AspectSequences) -> Result<ForwardTrace> {
    forward_aspects(params, &aspects.aspects())
}
