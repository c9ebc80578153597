//! LSTM sequence classifier with backpropagation through time.
//!
//! With `v_t = [x_t; h_{t-1}]` and `h_0 = c_0 = 0`:
//!
//! ```text
//! i = sigmoid(W_i v + b_i)   f = sigmoid(W_f v + b_f)   o = sigmoid(W_o v + b_o)
//! g = tanh(W_g v + b_g)      c_t = f * c_{t-1} + i * g  h_t = o * tanh(c_t)
//! logits = W_out^T h_T + b_out
//! ```

use rand::Rng;

use super::loss::{cross_entropy, logit_gradient, softmax};
use super::{Parameters, Tensor, NUM_CLASSES};
use crate::error::{Error, Result};

const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "candidate"];

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Gate weights in order input, forget, output, candidate; each `H x (D + H)`.
    pub w: [Tensor; 4],
    /// Gate biases, each `H`.
    pub b: [Tensor; 4],
    /// `H x 2`
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.w
            .iter()
            .chain(self.b.iter())
            .chain([&self.w_out, &self.b_out])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.w
            .iter_mut()
            .chain(self.b.iter_mut())
            .chain([&mut self.w_out, &mut self.b_out])
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dot product with four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

struct StepCache {
    v: Vec<f64>,
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wide = input + hidden;
        LstmParams {
            w: GATE_NAMES.map(|g| Tensor::zeros(&format!("lstm.w_{g}"), &[hidden, wide])),
            b: GATE_NAMES.map(|g| Tensor::zeros(&format!("lstm.b_{g}"), &[hidden])),
            w_out: Tensor::zeros("lstm.w_out", &[hidden, NUM_CLASSES]),
            b_out: Tensor::zeros("lstm.b_out", &[NUM_CLASSES]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let wide = input + hidden;
        let mut params = LstmParams::zeros(input, hidden);
        for (w, name) in params.w.iter_mut().zip(GATE_NAMES) {
            *w = Tensor::glorot(&format!("lstm.w_{name}"), &[hidden, wide], wide, hidden, rng);
        }
        params.w_out = Tensor::glorot("lstm.w_out", &[hidden, NUM_CLASSES], hidden, NUM_CLASSES, rng);
        params
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let find = |name: String| -> Result<Tensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .cloned()
                .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))
        };
        let w = [0, 1, 2, 3].map(|k| find(format!("lstm.w_{}", GATE_NAMES[k])));
        let b = [0, 1, 2, 3].map(|k| find(format!("lstm.b_{}", GATE_NAMES[k])));
        let [w0, w1, w2, w3] = w;
        let [b0, b1, b2, b3] = b;
        let params = LstmParams {
            w: [w0?, w1?, w2?, w3?],
            b: [b0?, b1?, b2?, b3?],
            w_out: find("lstm.w_out".into())?,
            b_out: find("lstm.b_out".into())?,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let (h, wide) = match self.w_out.shape[..] {
            [h, NUM_CLASSES] => (h, self.w[0].shape.get(1).copied().unwrap_or(0)),
            _ => return Err(Error::ShapeMismatch("lstm.w_out must be H x 2".into())),
        };
        let ok = wide > h
            && self.w.iter().all(|w| w.shape == [h, wide])
            && self.b.iter().all(|b| b.shape == [h])
            && self.b_out.shape == [NUM_CLASSES];
        if !ok {
            return Err(Error::ShapeMismatch("inconsistent LSTM shapes".into()));
        }
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_out.shape[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].shape[1] - self.hidden_dim()
    }

    fn check_sequence(&self, sequence: &[Vec<f64>]) -> Result<()> {
        if sequence.is_empty() {
            return Err(Error::Empty("LSTM input sequence".into()));
        }
        if let Some(bad) = sequence.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "sequence element of dimension {} vs LSTM input {}",
                bad.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, sequence: &[Vec<f64>], keep_cache: bool) -> (Vec<f64>, Vec<StepCache>) {
        self.run_batch(&[sequence], keep_cache).pop().expect("one sequence in, one out")
    }

    /// Runs every sequence in lockstep so each weight row is reused across
    /// the whole batch while it is hot in cache.
    fn run_batch(&self, sequences: &[&[Vec<f64>]], keep_cache: bool) -> Vec<(Vec<f64>, Vec<StepCache>)> {
        let h = self.hidden_dim();
        let wide = self.input_dim() + h;
        let n = sequences.len();
        let mut hidden = vec![vec![0.0; h]; n];
        let mut cell = vec![vec![0.0; h]; n];
        let mut caches: Vec<Vec<StepCache>> = (0..n).map(|_| Vec::new()).collect();
        let max_len = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        for t in 0..max_len {
            let active: Vec<usize> = (0..n).filter(|&b| sequences[b].len() > t).collect();
            let vs: Vec<Vec<f64>> = active
                .iter()
                .map(|&b| {
                    let mut v = Vec::with_capacity(wide);
                    v.extend_from_slice(&sequences[b][t]);
                    v.extend_from_slice(&hidden[b]);
                    v
                })
                .collect();
            let mut gates: Vec<[Vec<f64>; 4]> = active.iter().map(|_| [0, 1, 2, 3].map(|_| vec![0.0; h])).collect();
            for k in 0..4 {
                let w = &self.w[k].data;
                for j in 0..h {
                    let row = &w[j * wide..(j + 1) * wide];
                    for (v, g) in vs.iter().zip(gates.iter_mut()) {
                        let z = self.b[k].data[j] + dot(row, v);
                        g[k][j] = if k == 3 { z.tanh() } else { sigmoid(z) };
                    }
                }
            }
            for ((&b, v), gates) in active.iter().zip(vs).zip(gates) {
                let c_prev = std::mem::take(&mut cell[b]);
                cell[b] = (0..h)
                    .map(|j| gates[1][j] * c_prev[j] + gates[0][j] * gates[3][j])
                    .collect();
                let tanh_c: Vec<f64> = cell[b].iter().map(|c| c.tanh()).collect();
                hidden[b] = (0..h).map(|j| gates[2][j] * tanh_c[j]).collect();
                if keep_cache {
                    caches[b].push(StepCache {
                        v,
                        gates,
                        c_prev,
                        tanh_c,
                    });
                }
            }
        }
        hidden.into_iter().zip(caches).collect()
    }

    fn readout(&self, hidden: &[f64]) -> [f64; NUM_CLASSES] {
        let mut logits = [self.b_out.data[0], self.b_out.data[1]];
        for (row, &a) in self.w_out.data.chunks_exact(NUM_CLASSES).zip(hidden) {
            logits[0] += a * row[0];
            logits[1] += a * row[1];
        }
        logits
    }

    /// Final hidden state.
    pub fn final_hidden(&self, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_sequence(sequence)?;
        Ok(self.run(sequence, false).0)
    }

    /// Adds `weight * d loss / d params` into `grads`; returns the loss and
    /// class probabilities.
    pub(crate) fn accumulate_gradients(
        &self,
        sequence: &[Vec<f64>],
        label: usize,
        weight: f64,
        grads: &mut LstmParams,
    ) -> (f64, [f64; NUM_CLASSES]) {
        self.accumulate_batch_gradients(&[(sequence, label)], weight, grads)
            .pop()
            .expect("one sequence in, one out")
    }

    /// Batched form of [`Self::accumulate_gradients`]: every item contributes
    /// `weight * d loss / d params`. Returns per-item loss and probabilities.
    pub(crate) fn accumulate_batch_gradients(
        &self,
        batch: &[(&[Vec<f64>], usize)],
        weight: f64,
        grads: &mut LstmParams,
    ) -> Vec<(f64, [f64; NUM_CLASSES])> {
        let h = self.hidden_dim();
        let d = self.input_dim();
        let wide = d + h;
        let sequences: Vec<&[Vec<f64>]> = batch.iter().map(|(s, _)| *s).collect();
        let runs = self.run_batch(&sequences, true);

        let mut out = Vec::with_capacity(batch.len());
        let mut dh: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
        for ((hidden, _), &(_, label)) in runs.iter().zip(batch) {
            let probs = softmax(&self.readout(hidden));
            out.push((cross_entropy(&probs, label), [probs[0], probs[1]]));
            let dz: Vec<f64> = logit_gradient(&probs, label).iter().map(|g| g * weight).collect();
            grads.b_out.data[0] += dz[0];
            grads.b_out.data[1] += dz[1];
            let mut dh_b = vec![0.0; h];
            for j in 0..h {
                let w = &self.w_out.data[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                let g = &mut grads.w_out.data[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                g[0] += hidden[j] * dz[0];
                g[1] += hidden[j] * dz[1];
                dh_b[j] = w[0] * dz[0] + w[1] * dz[1];
            }
            dh.push(dh_b);
        }

        let mut dc_next = vec![vec![0.0; h]; batch.len()];
        let max_len = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        // Walk back from each sequence's last step, aligned at the end.
        for r in 0..max_len {
            let active: Vec<(usize, &StepCache)> = runs
                .iter()
                .enumerate()
                .filter(|(_, (_, c))| c.len() > r)
                .map(|(b, (_, c))| (b, &c[c.len() - 1 - r]))
                .collect();
            let mut dpre: Vec<[Vec<f64>; 4]> = Vec::with_capacity(active.len());
            for &(b, cache) in &active {
                let [gi, gf, go, gg] = &cache.gates;
                let mut dp = [0, 1, 2, 3].map(|_| vec![0.0; h]);
                for j in 0..h {
                    let dc = dc_next[b][j] + dh[b][j] * go[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
                    dp[0][j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                    dp[1][j] = dc * cache.c_prev[j] * gf[j] * (1.0 - gf[j]);
                    dp[2][j] = dh[b][j] * cache.tanh_c[j] * go[j] * (1.0 - go[j]);
                    dp[3][j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                    dc_next[b][j] = dc * gf[j];
                }
                dpre.push(dp);
            }
            // Only the recurrent part of d loss / d v feeds the previous step.
            let mut dh_prev = vec![vec![0.0; h]; active.len()];
            for k in 0..4 {
                let w = &self.w[k].data;
                let gw = &mut grads.w[k].data;
                for j in 0..h {
                    let row = j * wide..(j + 1) * wide;
                    let grow = &mut gw[row.clone()];
                    let wrow = &w[row][d..];
                    for (a, &(_, cache)) in active.iter().enumerate() {
                        let dj = dpre[a][k][j];
                        grads.b[k].data[j] += dj;
                        if dj == 0.0 {
                            continue;
                        }
                        for (g, &vk) in grow.iter_mut().zip(&cache.v) {
                            *g += dj * vk;
                        }
                        for (dhk, &wk) in dh_prev[a].iter_mut().zip(wrow) {
                            *dhk += dj * wk;
                        }
                    }
                }
            }
            for ((b, _), dhp) in active.iter().zip(dh_prev) {
                dh[*b] = dhp;
            }
        }
        out
    }
}

pub fn lstm_forward(params: &LstmParams, sequence: &[Vec<f64>]) -> Result<[f64; NUM_CLASSES]> {
    params.check_sequence(sequence)?;
    Ok(params.readout(&params.run(sequence, false).0))
}

pub fn lstm_probabilities(params: &LstmParams, sequence: &[Vec<f64>]) -> Result<[f64; NUM_CLASSES]> {
    let p = softmax(&lstm_forward(params, sequence)?);
    Ok([p[0], p[1]])
}

/// BPTT gradient of `cross_entropy(softmax(lstm_forward(seq)), label)`, plus the loss.
pub fn lstm_gradients(params: &LstmParams, sequence: &[Vec<f64>], label: usize) -> Result<(LstmParams, f64)> {
    params.check_sequence(sequence)?;
    if label >= NUM_CLASSES {
        return Err(Error::InvalidParameter(format!("label {label} out of range")));
    }
    let mut grads = params.zeros_like();
    let (loss, _) = params.accumulate_gradients(sequence, label, 1.0, &mut grads);
    Ok((grads, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sequence(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_params_give_output_bias() {
        let mut p = LstmParams::zeros(3, 4);
        p.b_out.data = vec![0.5, -0.25];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = random_sequence(&mut rng, 5, 3);
        assert_eq!(p.final_hidden(&seq).unwrap(), vec![0.0; 4]);
        assert_eq!(lstm_forward(&p, &seq).unwrap(), [0.5, -0.25]);
    }

    #[test]
    fn single_step_is_one_cell_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::init(3, 2, &mut rng);
        let x = vec![0.3, -0.7, 0.2];
        let mut v = x.clone();
        v.extend([0.0, 0.0]);
        let affine = |k: usize, j: usize| {
            p.b[k].data[j] + (0..5).map(|m| p.w[k].data[j * 5 + m] * v[m]).sum::<f64>()
        };
        let h: Vec<f64> = (0..2)
            .map(|j| {
                let c = sigmoid(affine(0, j)) * affine(3, j).tanh();
                sigmoid(affine(2, j)) * c.tanh()
            })
            .collect();
        let got = p.final_hidden(&[x]).unwrap();
        for j in 0..2 {
            assert!((got[j] - h[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LstmParams::init(3, 4, &mut rng);
        let seq = random_sequence(&mut rng, 3, 3);
        let mut rev = seq.clone();
        rev.reverse();
        assert_ne!(p.final_hidden(&seq).unwrap(), p.final_hidden(&rev).unwrap());
        assert_eq!(lstm_forward(&p, &seq).unwrap(), lstm_forward(&p, &seq).unwrap());
    }

    #[test]
    fn readout_bias_gradient_is_p_minus_onehot() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = LstmParams::init(3, 4, &mut rng);
        let seq = random_sequence(&mut rng, 3, 3);
        let probs = lstm_probabilities(&p, &seq).unwrap();
        let (g, _) = lstm_gradients(&p, &seq, 0).unwrap();
        assert!((g.b_out.data[0] - (probs[0] - 1.0)).abs() < 1e-15);
        assert!((g.b_out.data[1] - probs[1]).abs() < 1e-15);
    }

    #[test]
    fn gradients_vanish_at_confident_correct_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = LstmParams::init(2, 3, &mut rng);
        p.b_out.data = vec![60.0, -60.0];
        let seq = random_sequence(&mut rng, 2, 2);
        let (g, loss) = lstm_gradients(&p, &seq, 0).unwrap();
        assert!(loss < 1e-9);
        for t in g.tensors() {
            assert!(t.data.iter().all(|v| v.abs() <= 1e-9), "{}", t.name);
        }
    }

    #[test]
    fn rejects_bad_sequences() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_forward(&p, &[]).is_err());
        assert!(lstm_forward(&p, &[vec![0.0; 2]]).is_err());
        assert!(lstm_gradients(&p, &[vec![0.0; 3]], 5).is_err());
    }

    #[test]
    fn tensors_round_trip_by_name() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams::init(3, 2, &mut rng);
        let back = LstmParams::from_tensors(p.tensors().into_iter().cloned().collect()).unwrap();
        assert_eq!(back, p);
        assert_eq!((back.input_dim(), back.hidden_dim()), (3, 2));
    }
}
