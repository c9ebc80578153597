//! One-hidden-layer ReLU classifier: `logits = W2^T relu(W1^T x + b1) + b2`.

use rand::Rng;

use super::loss::{cross_entropy, logit_gradient, softmax};
use super::{Parameters, Tensor, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `D x H`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `H x 2`
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        MlpParams {
            w1: Tensor::zeros("mlp.w1", &[input, hidden]),
            b1: Tensor::zeros("mlp.b1", &[hidden]),
            w2: Tensor::zeros("mlp.w2", &[hidden, NUM_CLASSES]),
            b2: Tensor::zeros("mlp.b2", &[NUM_CLASSES]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        MlpParams {
            w1: Tensor::glorot("mlp.w1", &[input, hidden], input, hidden, rng),
            b1: Tensor::zeros("mlp.b1", &[hidden]),
            w2: Tensor::glorot("mlp.w2", &[hidden, NUM_CLASSES], hidden, NUM_CLASSES, rng),
            b2: Tensor::zeros("mlp.b2", &[NUM_CLASSES]),
        }
    }

    pub fn from_tensors(mut tensors: Vec<Tensor>) -> Result<Self> {
        let mut take = |name: &str| -> Result<Tensor> {
            let pos = tensors
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
            Ok(tensors.swap_remove(pos))
        };
        let params = MlpParams {
            w1: take("mlp.w1")?,
            b1: take("mlp.b1")?,
            w2: take("mlp.w2")?,
            b2: take("mlp.b2")?,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let (d, h) = match self.w1.shape[..] {
            [d, h] => (d, h),
            _ => return Err(Error::ShapeMismatch("mlp.w1 must be 2-D".into())),
        };
        if self.b1.shape != [h] || self.w2.shape != [h, NUM_CLASSES] || self.b2.shape != [NUM_CLASSES] || d == 0 {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent MLP shapes: w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.shape[1]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input dimension {} vs MLP input {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations.
    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden_dim();
        let mut z = self.b1.data.clone();
        for (row, &xd) in self.w1.data.chunks_exact(h).zip(x) {
            if xd != 0.0 {
                for (zj, w) in z.iter_mut().zip(row) {
                    *zj += xd * w;
                }
            }
        }
        z
    }

    fn readout(&self, hidden: &[f64]) -> [f64; NUM_CLASSES] {
        let mut logits = [self.b2.data[0], self.b2.data[1]];
        for (row, &a) in self.w2.data.chunks_exact(NUM_CLASSES).zip(hidden) {
            logits[0] += a * row[0];
            logits[1] += a * row[1];
        }
        logits
    }

    /// Adds `weight * d loss / d params` into `grads` and returns the loss and
    /// class probabilities.
    pub(crate) fn accumulate_gradients(
        &self,
        x: &[f64],
        label: usize,
        weight: f64,
        grads: &mut MlpParams,
    ) -> (f64, [f64; NUM_CLASSES]) {
        let h = self.hidden_dim();
        let pre = self.hidden_pre(x);
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let logits = self.readout(&act);
        let probs = softmax(&logits);
        let loss = cross_entropy(&probs, label);
        let dz2: Vec<f64> = logit_gradient(&probs, label).iter().map(|g| g * weight).collect();

        grads.b2.data[0] += dz2[0];
        grads.b2.data[1] += dz2[1];
        let mut dz1 = vec![0.0; h];
        for j in 0..h {
            let w = &self.w2.data[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
            let g = &mut grads.w2.data[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
            g[0] += act[j] * dz2[0];
            g[1] += act[j] * dz2[1];
            if pre[j] > 0.0 {
                dz1[j] = w[0] * dz2[0] + w[1] * dz2[1];
            }
        }
        for (b, d) in grads.b1.data.iter_mut().zip(&dz1) {
            *b += d;
        }
        for (row, &xd) in grads.w1.data.chunks_exact_mut(h).zip(x) {
            if xd != 0.0 {
                for (g, d) in row.iter_mut().zip(&dz1) {
                    *g += xd * d;
                }
            }
        }
        (loss, [probs[0], probs[1]])
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    params.check_input(x)?;
    let act: Vec<f64> = params.hidden_pre(x).into_iter().map(|z| z.max(0.0)).collect();
    Ok(params.readout(&act))
}

pub fn mlp_probabilities(params: &MlpParams, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
    let p = softmax(&mlp_forward(params, x)?);
    Ok([p[0], p[1]])
}

/// Gradient of `cross_entropy(softmax(mlp_forward(x)), label)` with respect
/// to every parameter, plus the loss.
pub fn mlp_gradients(params: &MlpParams, x: &[f64], label: usize) -> Result<(MlpParams, f64)> {
    params.check_input(x)?;
    if label >= NUM_CLASSES {
        return Err(Error::InvalidParameter(format!("label {label} out of range")));
    }
    let mut grads = params.zeros_like();
    let (loss, _) = params.accumulate_gradients(x, label, 1.0, &mut grads);
    Ok((grads, loss))
}
