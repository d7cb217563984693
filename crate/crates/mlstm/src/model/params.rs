//! Parameter containers for the model.
//!
//! Gradients and optimizer accumulators reuse [`ModelParams`] as a
//! same-shaped container; [`ModelParams::buffers`] exposes every parameter
//! tensor in one fixed, documented order that the optimizer, the gradient
//! checker, and the checkpoint format all share.

use crate::error::{Error, Result};
use crate::numerics::{seeded_uniform_init, Matrix, SeededRng, Vector};

/// Checkpoint/parameter format version.
pub const FORMAT_VERSION: u32 = 1;

/// Binary classification: benign (0) vs vandal (1).
pub const NUM_CLASSES: usize = 2;

/// Weights of one aspect LSTM: input projections (h x d), recurrent
/// projections (h x h), and biases (h) for the candidate, input, forget,
/// and output gates.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_c: Matrix,
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub u_c: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub b_c: Vector,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_c: Matrix::zeros(hidden, input_dim),
            w_i: Matrix::zeros(hidden, input_dim),
            w_f: Matrix::zeros(hidden, input_dim),
            w_o: Matrix::zeros(hidden, input_dim),
            u_c: Matrix::zeros(hidden, hidden),
            u_i: Matrix::zeros(hidden, hidden),
            u_f: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            b_c: Vector::zeros(hidden),
            b_i: Vector::zeros(hidden),
            b_f: Vector::zeros(hidden),
            b_o: Vector::zeros(hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_c.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_c.rows()
    }
}

/// Attention head: projection W_a (h x h) and context vector u_a (h).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_a: Matrix,
    pub u_a: Vector,
}

/// Softmax classifier: one weight row (h) and bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub weights: Matrix,
    pub bias: Vector,
}

impl ClassifierParams {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }
}

/// Every trainable parameter of the model plus dimension metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub lstms: Vec<LstmParams>,
    pub attention: AttentionParams,
    pub classifier: ClassifierParams,
    /// Input dimension of each aspect stream.
    pub aspect_dims: Vec<usize>,
    pub hidden: usize,
    pub classes: usize,
    /// Seed of the word-vector store used to build the training inputs;
    /// carried so scoring reconstructs the exact same preprocessing.
    pub word_seed: u64,
    pub version: u32,
}

fn validate_dims(aspect_dims: &[usize], hidden: usize, classes: usize) -> Result<()> {
    if aspect_dims.is_empty() || aspect_dims.contains(&0) || hidden == 0 {
        return Err(Error::Dimension(format!(
            "aspect dims {aspect_dims:?} and hidden {hidden} must all be positive"
        )));
    }
    if classes < 2 {
        return Err(Error::Dimension(format!("need at least 2 classes, got {classes}")));
    }
    Ok(())
}

fn seeded_vector(len: usize, bound: f64, rng: &mut SeededRng) -> Result<Vector> {
    let m = seeded_uniform_init(1, len, bound, rng)?;
    Ok(Vector::from_vec(m.data().to_vec()))
}

impl ModelParams {
    pub fn zeros(aspect_dims: &[usize], hidden: usize, classes: usize) -> Result<Self> {
        validate_dims(aspect_dims, hidden, classes)?;
        Ok(ModelParams {
            lstms: aspect_dims.iter().map(|&d| LstmParams::zeros(d, hidden)).collect(),
            attention: AttentionParams {
                w_a: Matrix::zeros(hidden, hidden),
                u_a: Vector::zeros(hidden),
            },
            classifier: ClassifierParams {
                weights: Matrix::zeros(classes, hidden),
                bias: Vector::zeros(classes),
            },
            aspect_dims: aspect_dims.to_vec(),
            hidden,
            classes,
            word_seed: 0,
            version: FORMAT_VERSION,
        })
    }

    /// All parameters i.i.d. uniform on [-bound, +bound], drawn in buffer
    /// order from `rng`.
    pub fn seeded(
        aspect_dims: &[usize],
        hidden: usize,
        classes: usize,
        bound: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        validate_dims(aspect_dims, hidden, classes)?;
        let mut lstms = Vec::with_capacity(aspect_dims.len());
        for &d in aspect_dims {
            lstms.push(LstmParams {
                w_c: seeded_uniform_init(hidden, d, bound, rng)?,
                w_i: seeded_uniform_init(hidden, d, bound, rng)?,
                w_f: seeded_uniform_init(hidden, d, bound, rng)?,
                w_o: seeded_uniform_init(hidden, d, bound, rng)?,
                u_c: seeded_uniform_init(hidden, hidden, bound, rng)?,
                u_i: seeded_uniform_init(hidden, hidden, bound, rng)?,
                u_f: seeded_uniform_init(hidden, hidden, bound, rng)?,
                u_o: seeded_uniform_init(hidden, hidden, bound, rng)?,
                b_c: seeded_vector(hidden, bound, rng)?,
                b_i: seeded_vector(hidden, bound, rng)?,
                b_f: seeded_vector(hidden, bound, rng)?,
                b_o: seeded_vector(hidden, bound, rng)?,
            });
        }
        Ok(ModelParams {
            lstms,
            attention: AttentionParams {
                w_a: seeded_uniform_init(hidden, hidden, bound, rng)?,
                u_a: seeded_vector(hidden, bound, rng)?,
            },
            classifier: ClassifierParams {
                weights: seeded_uniform_init(classes, hidden, bound, rng)?,
                bias: seeded_vector(classes, bound, rng)?,
            },
            aspect_dims: aspect_dims.to_vec(),
            hidden,
            classes,
            word_seed: 0,
            version: FORMAT_VERSION,
        })
    }

    /// A zero-valued container with the same shapes (for gradients and
    /// optimizer accumulators).
    pub fn zeros_like(&self) -> Self {
        let mut z = ModelParams::zeros(&self.aspect_dims, self.hidden, self.classes)
            .expect("shapes of an existing model are valid");
        z.word_seed = self.word_seed;
        z
    }

    pub fn num_aspects(&self) -> usize {
        self.lstms.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.aspect_dims == other.aspect_dims
            && self.hidden == other.hidden
            && self.classes == other.classes
    }

    /// Every parameter tensor in the canonical order: for each aspect LSTM
    /// `W_c W_i W_f W_o U_c U_i U_f U_o b_c b_i b_f b_o`, then attention
    /// `W_a u_a`, then classifier `weights bias`. Matrices appear row-major.
    /// This is also the checkpoint serialization order.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.lstms.len() * 12 + 4);
        for l in &self.lstms {
            out.extend([
                l.w_c.data(),
                l.w_i.data(),
                l.w_f.data(),
                l.w_o.data(),
                l.u_c.data(),
                l.u_i.data(),
                l.u_f.data(),
                l.u_o.data(),
                l.b_c.as_slice(),
                l.b_i.as_slice(),
                l.b_f.as_slice(),
                l.b_o.as_slice(),
            ]);
        }
        out.push(self.attention.w_a.data());
        out.push(self.attention.u_a.as_slice());
        out.push(self.classifier.weights.data());
        out.push(self.classifier.bias.as_slice());
        out
    }

    /// Mutable view of the same tensors, in the same order as [`buffers`].
    ///
    /// [`buffers`]: ModelParams::buffers
    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.lstms.len() * 12 + 4);
        for l in &mut self.lstms {
            out.extend([
                l.w_c.data_mut(),
                l.w_i.data_mut(),
                l.w_f.data_mut(),
                l.w_o.data_mut(),
                l.u_c.data_mut(),
                l.u_i.data_mut(),
                l.u_f.data_mut(),
                l.u_o.data_mut(),
                l.b_c.as_mut_slice(),
                l.b_i.as_mut_slice(),
                l.b_f.as_mut_slice(),
                l.b_o.as_mut_slice(),
            ]);
        }
        out.push(self.attention.w_a.data_mut());
        out.push(self.attention.u_a.as_mut_slice());
        out.push(self.classifier.weights.data_mut());
        out.push(self.classifier.bias.as_mut_slice());
        out
    }

    pub fn param_count(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// Concatenation of all buffers, used by the finite-difference oracle.
    pub fn to_flat(&self) -> Vec<f64> {
        self.buffers().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} entries, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for buf in self.buffers_mut() {
            buf.copy_from_slice(&flat[offset..offset + buf.len()]);
            offset += buf.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_is_deterministic() {
        let a = ModelParams::seeded(&[3, 3, 2], 4, 2, 0.08, &mut SeededRng::new(1)).unwrap();
        let b = ModelParams::seeded(&[3, 3, 2], 4, 2, 0.08, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
    }

    #[test]
    fn buffer_order_is_stable_and_complete() {
        let p = ModelParams::seeded(&[3, 2], 4, 2, 0.08, &mut SeededRng::new(2)).unwrap();
        // 12 tensors per LSTM, 2 attention, 2 classifier.
        assert_eq!(p.buffers().len(), 2 * 12 + 4);
        let by_hand = (4 * (4 * 3) + 4 * (4 * 4) + 4 * 4) // aspect with d=3
            + (4 * (4 * 2) + 4 * (4 * 4) + 4 * 4)         // aspect with d=2
            + (4 * 4 + 4)                                 // attention
            + (2 * 4 + 2); // classifier
        assert_eq!(p.param_count(), by_hand);
    }

    #[test]
    fn flat_round_trip() {
        let p = ModelParams::seeded(&[2, 2, 2], 3, 2, 0.5, &mut SeededRng::new(3)).unwrap();
        let flat = p.to_flat();
        let mut q = p.zeros_like();
        q.assign_from_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.assign_from_flat(&flat[1..]).is_err());
    }

    #[test]
    fn shape_validation() {
        assert!(ModelParams::zeros(&[], 4, 2).is_err());
        assert!(ModelParams::zeros(&[3], 0, 2).is_err());
        assert!(ModelParams::zeros(&[3], 4, 1).is_err());
    }
}
