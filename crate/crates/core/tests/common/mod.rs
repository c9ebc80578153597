//! Independent oracles and random instance generators shared by the
//! integration suites.

#![allow(dead_code)]

use apexfas::model::{cross_entropy, mlp_forward, softmax, lstm_forward, LstmParams, MlpParams, Parameters};
use apexfas::tensor_io::{Frame, Label, VideoTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Frame {
    let pixels = (0..h * w * c).map(|_| rng.gen::<f32>()).collect();
    Frame::new(h, w, c, pixels).unwrap()
}

pub fn random_video(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, c: usize) -> VideoTensor {
    let frames = (0..n).map(|_| random_frame(rng, h, w, c)).collect();
    VideoTensor::new(format!("v{n}"), frames).unwrap()
}

/// Unevaluated sum `hi + lo` carried with error-free transformations.
#[derive(Clone, Copy, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub fn from(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    pub fn add(self, x: f64) -> Self {
        let (s, e) = Self::two_sum(self.hi, x);
        let (hi, lo) = Self::two_sum(s, e + self.lo);
        DoubleDouble { hi, lo }
    }

    /// Adds the exact product `a * b`.
    pub fn add_product(self, a: f64, b: f64) -> Self {
        let p = a * b;
        let err = a.mul_add(b, -p);
        self.add(p).add(err)
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    pub fn div(self, d: DoubleDouble) -> f64 {
        let q = self.hi / d.hi;
        // one Newton correction: (x - q d) / d
        let r = self.add_product(-q, d.hi).add(-q * d.lo);
        q + r.value() / d.hi
    }
}

/// Direct per-pixel evaluation of the Gaussian-weighted, normalized apex:
/// `W_i = exp(-(i - c)^2 / (2 sigma^2))` with `c = (n + 1) / 2`, sums carried
/// in double-double.
pub fn oracle_apex(frames: &[Frame], sigma: f64) -> Vec<f64> {
    let n = frames.len();
    let c = (n as f64 + 1.0) / 2.0;
    let weights: Vec<f64> = (1..=n)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total = weights.iter().fold(DoubleDouble::default(), |acc, &w| acc.add(w));
    (0..frames[0].pixels().len())
        .map(|p| {
            let num = frames
                .iter()
                .zip(&weights)
                .fold(DoubleDouble::default(), |acc, (f, &w)| acc.add_product(w, f.pixels()[p] as f64));
            num.div(total)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).abs()).fold(0.0, f64::max)
}

/// Probability that a random live score outranks a random spoof score,
/// ties counting one half, by enumerating every pair.
pub fn pairwise_auc(items: &[(f64, Label)]) -> f64 {
    let live: Vec<f64> = items.iter().filter(|i| i.1 == Label::Live).map(|i| i.0).collect();
    let spoof: Vec<f64> = items.iter().filter(|i| i.1 == Label::Spoof).map(|i| i.0).collect();
    let mut wins = 0.0;
    for &l in &live {
        for &s in &spoof {
            wins += if l > s {
                1.0
            } else if l == s {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (live.len() * spoof.len()) as f64
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn mlp_loss(params: &MlpParams, x: &[f64], label: usize) -> f64 {
    cross_entropy(&softmax(&mlp_forward(params, x).unwrap()), label)
}

pub fn lstm_loss(params: &LstmParams, seq: &[Vec<f64>], label: usize) -> f64 {
    cross_entropy(&softmax(&lstm_forward(params, seq).unwrap()), label)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every scalar parameter.
pub fn finite_difference_error<P: Parameters>(params: &P, analytic: &P, step: f64, loss: impl Fn(&P) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for k in 0..len {
            let original = probe.tensors()[ti].data[k];
            probe.tensors_mut()[ti].data[k] = original + step;
            let up = loss(&probe);
            probe.tensors_mut()[ti].data[k] = original - step;
            let down = loss(&probe);
            probe.tensors_mut()[ti].data[k] = original;
            let numeric = (up - down) / (2.0 * step);
            let exact = analytic.tensors()[ti].data[k];
            let rel = (numeric - exact).abs() / (numeric.abs() + exact.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Smallest |pre-activation| of the MLP hidden layer; central differences
/// are only meaningful away from the ReLU kink.
pub fn relu_margin(params: &MlpParams, x: &[f64]) -> f64 {
    let h = params.hidden_dim();
    (0..h)
        .map(|j| {
            let z: f64 = params.b1.data[j] + x.iter().enumerate().map(|(d, xd)| xd * params.w1.data[d * h + j]).sum::<f64>();
            z.abs()
        })
        .fold(f64::INFINITY, f64::min)
}
