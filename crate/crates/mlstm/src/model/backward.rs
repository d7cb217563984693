//! Analytic gradients for a single user's negative log-likelihood,
//! backpropagated through the classifier, the attention head, and all T
//! steps of every aspect LSTM.

use crate::error::{Error, Result};
use crate::numerics::Vector;

use super::forward::{ForwardTrace, LstmTrace};
use super::params::ModelParams;

fn check_trace(params: &ModelParams, trace: &ForwardTrace, label: usize) -> Result<()> {
    if label >= params.classes {
        return Err(Error::Config(format!(
            "label {label} out of range for {} classes",
            params.classes
        )));
    }
    if trace.aspects.len() != params.num_aspects()
        || trace.probs.len() != params.classes
        || trace.fusion.alpha.len() != params.num_aspects()
        || trace.fusion.embedding.len() != params.hidden
        || trace.is_empty()
    {
        return Err(Error::Dimension("trace does not match model shapes".into()));
    }
    for (m, aspect) in trace.aspects.iter().enumerate() {
        let first = &aspect.steps[0];
        if first.x.len() != params.aspect_dims[m] || first.h.len() != params.hidden {
            return Err(Error::Dimension(format!(
                "aspect {m} trace has input {} / hidden {}, model expects {} / {}",
                first.x.len(),
                first.h.len(),
                params.aspect_dims[m],
                params.hidden
            )));
        }
    }
    Ok(())
}

/// Gradient of `-ln P(label)` with respect to every parameter, returned in a
/// parameter-shaped container. The trace must come from a forward pass of
/// the same model.
pub fn backward_user(
    params: &ModelParams,
    trace: &ForwardTrace,
    label: usize,
) -> Result<ModelParams> {
    check_trace(params, trace, label)?;
    let hidden = params.hidden;
    let mut grads = params.zeros_like();

    // Softmax plus cross-entropy collapses to probs - onehot(label).
    let mut dlogits = trace.probs.clone();
    dlogits[label] -= 1.0;

    let embedding = &trace.fusion.embedding;
    grads.classifier.weights.add_outer(&dlogits, embedding);
    grads.classifier.bias.add_assign(&dlogits);
    let d_embedding = params.classifier.weights.matvec_transpose(&dlogits);

    // Attention head. s = sum_m alpha_m h_m with alpha = softmax(scores),
    // scores_m = u_a . tanh(W_a h_m).
    let alpha = &trace.fusion.alpha;
    let last_hidden: Vec<&Vector> = trace.aspects.iter().map(LstmTrace::last_h).collect();
    let d_alpha: Vec<f64> = last_hidden.iter().map(|hm| d_embedding.dot(hm)).collect();
    let alpha_weighted: f64 =
        d_alpha.iter().zip(alpha.iter()).map(|(da, a)| da * a).sum();

    let mut d_last_hidden: Vec<Vector> = alpha
        .iter()
        .map(|&a| {
            let mut dh = Vector::zeros(hidden);
            dh.axpy(a, &d_embedding);
            dh
        })
        .collect();
    for (m, dh) in d_last_hidden.iter_mut().enumerate() {
        let d_score = alpha[m] * (d_alpha[m] - alpha_weighted);
        let z = &trace.fusion.z[m];
        // d pre-tanh of z_m
        let d_proj: Vector = (0..hidden)
            .map(|j| d_score * params.attention.u_a[j] * (1.0 - z[j] * z[j]))
            .collect();
        grads.attention.u_a.axpy(d_score, z);
        grads.attention.w_a.add_outer(&d_proj, last_hidden[m]);
        dh.add_assign(&params.attention.w_a.matvec_transpose(&d_proj));
    }

    // Unroll each aspect LSTM backwards through time.
    let zero = Vector::zeros(hidden);
    for (m, d_final) in d_last_hidden.into_iter().enumerate() {
        let lstm = &params.lstms[m];
        let grad = &mut grads.lstms[m];
        let steps = &trace.aspects[m].steps;
        let mut dh = d_final;
        let mut dc = Vector::zeros(hidden);
        for t in (0..steps.len()).rev() {
            let step = &steps[t];
            let (h_prev, c_prev) = if t > 0 {
                (&steps[t - 1].h, &steps[t - 1].c)
            } else {
                (&zero, &zero)
            };
            for j in 0..hidden {
                dc[j] += dh[j] * step.o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
            }
            let da_o: Vector = (0..hidden)
                .map(|j| dh[j] * step.tanh_c[j] * step.o[j] * (1.0 - step.o[j]))
                .collect();
            let da_i: Vector = (0..hidden)
                .map(|j| dc[j] * step.c_tilde[j] * step.i[j] * (1.0 - step.i[j]))
                .collect();
            let da_f: Vector = (0..hidden)
                .map(|j| dc[j] * c_prev[j] * step.f[j] * (1.0 - step.f[j]))
                .collect();
            let da_c: Vector = (0..hidden)
                .map(|j| dc[j] * step.i[j] * (1.0 - step.c_tilde[j] * step.c_tilde[j]))
                .collect();

            grad.w_c.add_outer(&da_c, &step.x);
            grad.w_i.add_outer(&da_i, &step.x);
            grad.w_f.add_outer(&da_f, &step.x);
            grad.w_o.add_outer(&da_o, &step.x);
            grad.u_c.add_outer(&da_c, h_prev);
            grad.u_i.add_outer(&da_i, h_prev);
            grad.u_f.add_outer(&da_f, h_prev);
            grad.u_o.add_outer(&da_o, h_prev);
            grad.b_c.add_assign(&da_c);
            grad.b_i.add_assign(&da_i);
            grad.b_f.add_assign(&da_f);
            grad.b_o.add_assign(&da_o);

            let mut dh_prev = lstm.u_c.matvec_transpose(&da_c);
            dh_prev.add_assign(&lstm.u_i.matvec_transpose(&da_i));
            dh_prev.add_assign(&lstm.u_f.matvec_transpose(&da_f));
            dh_prev.add_assign(&lstm.u_o.matvec_transpose(&da_o));
            let dc_prev: Vector = (0..hidden).map(|j| dc[j] * step.f[j]).collect();
            dh = dh_prev;
            dc = dc_prev;
        }
    }
    Ok(grads)
}
