//! Gaussian temporal weighting and the apex frame.
//!
//! Frame indices are 1-based. A frame `i` of an `n`-frame clip gets the raw
//! weight `exp(-(i - c)^2 / (2 sigma^2))` around the center `c = (n + 1) / 2`;
//! the apex is the per-pixel sum of frames weighted by the normalized weights.
//! All weight arithmetic is done in `f64`.

use crate::error::{Error, Result};
use crate::tensor_io::{ApexFrame, Frame, VideoTensor};

pub const DEFAULT_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub normalized: bool,
    pub center: f64,
    pub sigma: f64,
}

impl WeightVector {
    /// Weight of 1-based frame `i`.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Center of an `n`-frame clip: `(n + 1) / 2`, a half-integer for even `n`.
pub fn central_index(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("frame count must be at least 1".into()));
    }
    Ok((n as f64 + 1.0) / 2.0)
}

pub fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and > 0, got {sigma}"
        )));
    }
    Ok(())
}

pub fn gaussian_weights(n: usize, center: f64, sigma: f64) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::InvalidParameter("frame count must be at least 1".into()));
    }
    check_sigma(sigma)?;
    if !center.is_finite() {
        return Err(Error::InvalidParameter(format!("center must be finite, got {center}")));
    }
    let denom = 2.0 * sigma * sigma;
    let values = (1..=n)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / denom).exp()
        })
        .collect();
    Ok(WeightVector {
        values,
        normalized: false,
        center,
        sigma,
    })
}

pub fn normalize_weights(weights: &WeightVector) -> Result<WeightVector> {
    if weights.values.is_empty() {
        return Err(Error::Empty("weight vector".into()));
    }
    let total = weights.sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Numeric(format!("weight sum {total} is not positive and finite")));
    }
    Ok(WeightVector {
        values: weights.values.iter().map(|w| w / total).collect(),
        normalized: true,
        center: weights.center,
        sigma: weights.sigma,
    })
}

/// Normalized Gaussian weights for an `n`-frame clip centered on its middle.
pub fn centered_weights(n: usize, sigma: f64) -> Result<WeightVector> {
    normalize_weights(&gaussian_weights(n, central_index(n)?, sigma)?)
}

/// Weighted sum of `frames` with `weights` (already normalized), accumulated
/// in `f64` per pixel.
pub(crate) fn weighted_sum(frames: &[Frame], weights: &[f64]) -> Frame {
    debug_assert_eq!(frames.len(), weights.len());
    let first = &frames[0];
    let mut acc = vec![0.0f64; first.pixels().len()];
    for (frame, &w) in frames.iter().zip(weights) {
        for (a, &p) in acc.iter_mut().zip(frame.pixels()) {
            *a += w * p as f64;
        }
    }
    // Each sum is a convex combination of values in [0, 1]; the clamp only
    // absorbs last-ulp drift of the f64 accumulation.
    let pixels = acc.into_iter().map(|v| (v as f32).clamp(0.0, 1.0)).collect();
    Frame::new(first.height(), first.width(), first.channels(), pixels)
        .expect("weighted sum preserves frame shape and range")
}

/// Condenses a whole video into one frame.
pub fn apex_frame(video: &VideoTensor, sigma: f64) -> Result<ApexFrame> {
    let weights = centered_weights(video.len(), sigma)?;
    Ok(ApexFrame {
        frame: weighted_sum(video.frames(), &weights.values),
        source_id: video.id().to_string(),
        segment_start: 1,
        segment_end: video.len(),
        sigma,
    })
}
