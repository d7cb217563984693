//! Shared numeric kernels: activations, a stabilized softmax, seeded
//! parameter initialization, and a central-difference gradient oracle.
//!
//! Everything here is pure and 64-bit; the gradient checks elsewhere in the
//! crate lean on that precision.

mod linalg;
mod rng;

pub use linalg::{Matrix, Vector};
pub use rng::{fnv1a, SeededRng};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction so large logits cannot overflow.
///
/// The output is a probability vector: non-negative entries summing to one.
pub fn stable_softmax(v: &Vector) -> Result<Vector> {
    if v.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Vector::from_vec(exps.into_iter().map(|e| e / sum).collect()))
}

/// Central-difference gradient estimate of a scalar function.
///
/// Evaluates `f` at `x ± step·e_i` for each coordinate; the error of the
/// estimate is O(step²) for smooth `f`.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&Vector) -> f64,
    x: &Vector,
    step: f64,
) -> Result<Vector> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let hi = f(&probe);
        probe[i] = orig - step;
        let lo = f(&probe);
        probe[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value while probing coordinate {i}"
            )));
        }
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(Vector::from_vec(grad))
}

/// Matrix with i.i.d. entries uniform on [-bound, +bound], drawn from `rng`.
pub fn seeded_uniform_init(
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::Config(format!("init bound must be > 0, got {bound}")));
    }
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Ok(Matrix::from_vec(rows, cols, data))
}
