//! Desk-scale differentiable models: grid features, a one-hidden-layer MLP,
//! an LSTM sequence head, softmax cross-entropy with analytic gradients,
//! Adam, and the `AFM1` checkpoint format. All math is `f64`.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod loss;
pub mod lstm;
pub mod mlp;

pub use adam::{adam_step, AdamState};
pub use features::{extract_features, FeatureVector, Standardizer, DEFAULT_GRID};
pub use loss::{cross_entropy, softmax, PROB_FLOOR};
pub use lstm::{lstm_forward, lstm_gradients, LstmParams};
pub use mlp::{mlp_forward, mlp_gradients, MlpParams};

use rand::Rng;

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_HIDDEN: usize = 100;

/// A named, row-major parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Glorot-uniform weights for a `fan_in x fan_out` map.
    pub fn glorot<R: Rng + ?Sized>(
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A fixed set of tensors; gradients and optimizer moments reuse the same type.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data.fill(0.0);
        }
        out
    }

    /// `self += scale * other`.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a += scale * b;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
