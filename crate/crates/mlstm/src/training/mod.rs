//! Training loop: per-user stochastic updates with Adadelta, epoch history,
//! and checkpoint persistence.
//!
//! Each epoch walks the users one at a time and applies one parameter update
//! per user (forward, backward, global-norm clip, Adadelta step). The whole
//! loop is a pure function of the dataset and the config, including the
//! optional seeded shuffle, so two runs with the same seed produce
//! bit-identical parameters.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ingestion::{AspectSequences, Label};
use crate::model::{
    backward_user, cross_entropy_loss, forward_user, ModelParams, NUM_CLASSES, PROB_FLOOR,
};
use crate::numerics::{SeededRng, Vector};

/// Uniform init range for all parameters.
pub const INIT_BOUND: f64 = 0.08;

/// Decayed accumulators of squared gradients and squared updates, one entry
/// per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdadeltaState {
    pub eg2: ModelParams,
    pub edx2: ModelParams,
    pub rho: f64,
    pub eps: f64,
}

impl AdadeltaState {
    pub fn new(like: &ModelParams, rho: f64, eps: f64) -> Self {
        AdadeltaState { eg2: like.zeros_like(), edx2: like.zeros_like(), rho, eps }
    }
}

/// One Adadelta step, elementwise over every parameter:
///
/// ```text
/// E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
/// dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
/// E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
/// p       <- p + dx
/// ```
pub fn adadelta_update(
    state: &mut AdadeltaState,
    params: &mut ModelParams,
    grads: &ModelParams,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.eg2) {
        return Err(Error::Dimension(
            "adadelta state, params, and gradients must share shapes".into(),
        ));
    }
    let rho = state.rho;
    let eps = state.eps;
    let param_bufs = params.buffers_mut();
    let eg2_bufs = state.eg2.buffers_mut();
    let edx2_bufs = state.edx2.buffers_mut();
    let grad_bufs = grads.buffers();
    for (((p, eg2), edx2), g) in
        param_bufs.into_iter().zip(eg2_bufs).zip(edx2_bufs).zip(grad_bufs)
    {
        for j in 0..p.len() {
            let gj = g[j];
            eg2[j] = rho * eg2[j] + (1.0 - rho) * gj * gj;
            let dx = -((edx2[j] + eps).sqrt() / (eg2[j] + eps).sqrt()) * gj;
            edx2[j] = rho * edx2[j] + (1.0 - rho) * dx * dx;
            p[j] += dx;
        }
    }
    Ok(())
}

/// Scale gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm. A `max_norm` of infinity disables clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads
        .buffers()
        .iter()
        .flat_map(|b| b.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = max_norm / norm;
        for buf in grads.buffers_mut() {
            for g in buf {
                *g *= scale;
            }
        }
    }
    norm
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden: usize,
    /// Dimension of the title and category aspect inputs (the word-vector
    /// dimension). The revert aspect is always 2.
    pub word_dim: usize,
    pub seed: u64,
    pub rho: f64,
    pub eps_ada: f64,
    pub clip_norm: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            hidden: 32,
            word_dim: 50,
            seed: 42,
            rho: 0.95,
            eps_ada: 1e-6,
            clip_norm: 5.0,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.hidden == 0 || self.word_dim == 0 {
            return Err(Error::Config("hidden and word_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if self.eps_ada.is_nan() || self.eps_ada <= 0.0 {
            return Err(Error::Config("eps_ada must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive (infinity disables)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

fn shuffle_in_place(order: &mut [usize], rng: &mut SeededRng) {
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i + 1));
    }
}

/// Train a model on labeled aspect sequences.
///
/// Parameters are seeded uniform on [-0.08, 0.08]; each epoch applies one
/// Adadelta update per user. Fails on an empty or single-class dataset and
/// aborts if the loss ever turns non-finite.
pub fn train(dataset: &[AspectSequences], cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let has = |l: Label| dataset.iter().any(|u| u.label == l);
    if !has(Label::Vandal) || !has(Label::Benign) {
        return Err(Error::SingleClass);
    }
    let aspect_dims = dataset[0].aspect_dims();
    if aspect_dims[0] != cfg.word_dim || aspect_dims[1] != cfg.word_dim {
        return Err(Error::Config(format!(
            "config word_dim {} does not match dataset aspect dims {:?}",
            cfg.word_dim, aspect_dims
        )));
    }
    for user in dataset {
        if user.aspect_dims() != aspect_dims {
            return Err(Error::Dimension(format!(
                "user {} has aspect dims {:?}, expected {:?}",
                user.user_id,
                user.aspect_dims(),
                aspect_dims
            )));
        }
    }

    let mut rng = SeededRng::new(cfg.seed);
    let mut params =
        ModelParams::seeded(&aspect_dims, cfg.hidden, NUM_CLASSES, INIT_BOUND, &mut rng)?;
    let mut state = AdadeltaState::new(&params, cfg.rho, cfg.eps_ada);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            shuffle_in_place(&mut order, &mut rng);
        }
        let mut probs: Vec<Vector> = Vec::with_capacity(dataset.len());
        let mut labels: Vec<usize> = Vec::with_capacity(dataset.len());
        let mut correct = 0usize;
        for &idx in &order {
            let user = &dataset[idx];
            let label = user.label.class_index();
            let trace = forward_user(&params, user)?;
            let loss = -trace.probs[label].max(PROB_FLOOR).ln();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss for user {} in epoch {epoch}",
                    user.user_id
                )));
            }
            if trace.predicted_class() == label {
                correct += 1;
            }
            probs.push(trace.probs.clone());
            labels.push(label);
            let mut grads = backward_user(&params, &trace, label)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            adadelta_update(&mut state, &mut params, &grads)?;
        }
        history.epochs.push(EpochStats {
            mean_loss: cross_entropy_loss(&probs, &labels)?,
            train_accuracy: correct as f64 / dataset.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}
