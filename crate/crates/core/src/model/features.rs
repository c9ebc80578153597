//! Grid average-pool features: grayscale, pool onto a `grid x grid`
//! lattice, flatten row-major.

use crate::error::{Error, Result};
use crate::tensor_io::Frame;

pub const DEFAULT_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub standardized: bool,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Cell `k` of `cells` covers `[k * len / cells, (k + 1) * len / cells)`.
fn cell_bounds(len: usize, cells: usize, k: usize) -> (usize, usize) {
    (k * len / cells, (k + 1) * len / cells)
}

pub fn extract_features(frame: &Frame, grid: usize) -> Result<FeatureVector> {
    if grid == 0 || grid > frame.height().min(frame.width()) {
        return Err(Error::InvalidParameter(format!(
            "grid {grid} must be in 1..={} for a {}x{} frame",
            frame.height().min(frame.width()),
            frame.height(),
            frame.width()
        )));
    }
    let gray = frame.grayscale();
    let width = frame.width();
    let mut values = Vec::with_capacity(grid * grid);
    for gr in 0..grid {
        let (r0, r1) = cell_bounds(frame.height(), grid, gr);
        for gc in 0..grid {
            let (c0, c1) = cell_bounds(width, grid, gc);
            let mut sum = 0.0;
            for r in r0..r1 {
                sum += gray[r * width + c0..r * width + c1].iter().sum::<f64>();
            }
            values.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    Ok(FeatureVector {
        values,
        standardized: false,
    })
}

/// Per-dimension zero-mean/unit-variance transform fitted on training
/// features. Constant dimensions keep a unit divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(samples: &[&[f64]]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("no samples to fit the standardizer".into()))?;
        let dim = first.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "feature of dimension {} among dimension {dim}",
                bad.len()
            )));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.iter()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|ss| {
                let sd = (ss / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &FeatureVector) -> Result<FeatureVector> {
        if features.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "feature dimension {} vs standardizer dimension {}",
                features.dim(),
                self.dim()
            )));
        }
        Ok(FeatureVector {
            values: features
                .values
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect(),
            standardized: true,
        })
    }
}
