//! Deterministic synthetic live/spoof videos across domains.
//!
//! Every video shows a bright Gaussian blob drifting smoothly over a flat
//! background with per-pixel noise. Spoof videos add a periodic grid texture
//! anchored at the top-left pixel, and frame-to-frame brightness flicker.
//! Domains differ in background level, noise scale and (optionally) texture
//! period, so a threshold calibrated on one domain has to transfer to another.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::apex::apex_frame;
use crate::error::{Error, Result};
use crate::metrics::{auc, roc_curve, ScoreSet};
use crate::model::extract_features;
use crate::tensor_io::{
    load_manifest, read_video, write_manifest, write_video, DatasetManifest, Frame, Label, ManifestEntry, Split,
    VideoTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams {
    pub name: String,
    pub background: f64,
    pub noise: f64,
    pub texture_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Videos per class per domain.
    pub num_videos: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub domains: Vec<DomainParams>,
    pub blob_intensity: f64,
    pub blob_radius: f64,
    /// Peak amplitude of the spoof grid texture.
    pub texture_amplitude: f64,
    /// Relative brightness flicker of spoof frames.
    pub flicker: f64,
    /// Brightness ramp over the clip, rising for live and falling for spoof.
    pub temporal_drift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 20,
            frames: 120,
            height: 32,
            width: 32,
            domains: vec![
                DomainParams {
                    name: "A".into(),
                    background: 0.3,
                    noise: 0.05,
                    texture_period: 6.0,
                },
                DomainParams {
                    name: "B".into(),
                    background: 0.42,
                    noise: 0.09,
                    texture_period: 6.0,
                },
            ],
            blob_intensity: 0.4,
            blob_radius: 5.0,
            texture_amplitude: 0.08,
            flicker: 0.08,
            temporal_drift: 0.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.num_videos == 0 || self.frames == 0 || self.height == 0 || self.width == 0 {
            return bad("num_videos, frames, height and width must be positive".into());
        }
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        for d in &self.domains {
            if d.name.is_empty() || d.name.contains([',', '/', '\\']) {
                return bad(format!("invalid domain name {:?}", d.name));
            }
            if !(d.texture_period > 0.0) || !(d.noise >= 0.0) || !(0.0..=1.0).contains(&d.background) {
                return bad(format!("invalid parameters for domain {}", d.name));
            }
        }
        for (i, a) in self.domains.iter().enumerate() {
            if self.domains[..i].iter().any(|b| b.name == a.name) {
                return bad(format!("duplicate domain {}", a.name));
            }
        }
        if !(self.blob_radius > 0.0) {
            return bad("blob_radius must be positive".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Domains are given as
    /// `domains = A:0.3:0.05:6;B:0.42:0.09:6` (name:background:noise:period).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = SynthConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::InvalidParameter(format!("synth config line {}: {m}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            config.set(key.trim(), value.trim()).map_err(|e| bad(&e))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid number {v:?}"))
        }
        match key {
            "num_videos" => self.num_videos = num(value)?,
            "frames" => self.frames = num(value)?,
            "height" => self.height = num(value)?,
            "width" => self.width = num(value)?,
            "size" => {
                self.height = num(value)?;
                self.width = self.height;
            }
            "blob_intensity" => self.blob_intensity = num(value)?,
            "blob_radius" => self.blob_radius = num(value)?,
            "texture_amplitude" => self.texture_amplitude = num(value)?,
            "flicker" => self.flicker = num(value)?,
            "temporal_drift" => self.temporal_drift = num(value)?,
            "seed" => self.seed = num(value)?,
            "domains" => self.domains = parse_domains(value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

impl std::fmt::Display for SynthConfig {
    /// `key = value` lines accepted by [`SynthConfig::from_kv`].
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let domains: Vec<String> = self
            .domains
            .iter()
            .map(|d| format!("{}:{}:{}:{}", d.name, d.background, d.noise, d.texture_period))
            .collect();
        writeln!(f, "num_videos = {}", self.num_videos)?;
        writeln!(f, "frames = {}", self.frames)?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "domains = {}", domains.join(";"))?;
        writeln!(f, "blob_intensity = {}", self.blob_intensity)?;
        writeln!(f, "blob_radius = {}", self.blob_radius)?;
        writeln!(f, "texture_amplitude = {}", self.texture_amplitude)?;
        writeln!(f, "flicker = {}", self.flicker)?;
        writeln!(f, "temporal_drift = {}", self.temporal_drift)?;
        write!(f, "seed = {}", self.seed)
    }
}

pub fn parse_domains(spec: &str) -> std::result::Result<Vec<DomainParams>, String> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|d| {
            let parts: Vec<&str> = d.trim().split(':').collect();
            if parts.len() != 4 {
                return Err(format!("domain {d:?} must be name:background:noise:period"));
            }
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("invalid number {v:?}"));
            Ok(DomainParams {
                name: parts[0].to_string(),
                background: num(parts[1])?,
                noise: num(parts[2])?,
                texture_period: num(parts[3])?,
            })
        })
        .collect()
}

/// A generated video with its assignment.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub video: VideoTensor,
    pub label: Label,
    pub split: Split,
    pub domain: String,
}

fn video_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the mixed pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn render_video(config: &SynthConfig, domain: &DomainParams, label: Label, id: String, seed: u64) -> VideoTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, n) = (config.height, config.width, config.frames);
    let noise = Normal::new(0.0, domain.noise.max(0.0)).expect("noise scale is finite");

    let cx0 = w as f64 / 2.0 + rng.gen_range(-0.1..0.1) * w as f64;
    let cy0 = h as f64 / 2.0 + rng.gen_range(-0.1..0.1) * h as f64;
    let amp_x = rng.gen_range(0.08..0.18) * w as f64;
    let amp_y = rng.gen_range(0.08..0.18) * h as f64;
    let (phase_x, phase_y) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let cycles = rng.gen_range(0.5..1.5);
    let intensity = config.blob_intensity * rng.gen_range(0.8..1.2);
    let radius = config.blob_radius * rng.gen_range(0.85..1.15);
    let is_spoof = label == Label::Spoof;

    let texture: Vec<f64> = (0..h * w)
        .map(|p| {
            let (r, c) = ((p / w) as f64, (p % w) as f64);
            let k = 2.0 * PI / domain.texture_period;
            0.5 * config.texture_amplitude * ((k * c).cos() + (k * r).cos())
        })
        .collect();

    let frames = (0..n)
        .map(|t| {
            let phase = 2.0 * PI * cycles * t as f64 / n as f64;
            let cx = cx0 + amp_x * (phase + phase_x).sin();
            let cy = cy0 + amp_y * (phase + phase_y).cos();
            let progress = if n > 1 { t as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
            let drift = if is_spoof { -1.0 } else { 1.0 } * config.temporal_drift * progress;
            let gain = if is_spoof {
                1.0 + config.flicker * if rng.gen::<bool>() { 1.0 } else { -1.0 }
            } else {
                1.0
            };
            let pixels = (0..h * w)
                .map(|p| {
                    let (r, c) = ((p / w) as f64, (p % w) as f64);
                    let d2 = (c - cx).powi(2) + (r - cy).powi(2);
                    let mut v = domain.background + intensity * (-d2 / (2.0 * radius * radius)).exp();
                    if is_spoof {
                        v = v * gain + texture[p];
                    }
                    v += drift + noise.sample(&mut rng);
                    v.clamp(0.0, 1.0) as f32
                })
                .collect();
            Frame::new(h, w, 1, pixels).expect("clamped synthetic frame")
        })
        .collect();
    VideoTensor::new(id, frames).expect("synthetic frames share one shape")
}

/// Stratified 60/20/20 split of `n` items by count.
fn split_counts(n: usize) -> (usize, usize) {
    let train = (0.6 * n as f64).round() as usize;
    let val = ((0.2 * n as f64).round() as usize).min(n - train);
    (train, val)
}

/// Generates every video in memory, ordered by domain, class (live first),
/// then index.
pub fn generate_videos(config: &SynthConfig) -> Result<Vec<SynthVideo>> {
    config.validate()?;
    let mut out = Vec::new();
    let mut index = 0u64;
    for domain in &config.domains {
        for label in [Label::Live, Label::Spoof] {
            let mut split_rng = ChaCha8Rng::seed_from_u64(video_seed(config.seed, u64::MAX - index));
            let mut order: Vec<usize> = (0..config.num_videos).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut split_rng);
            let (train, val) = split_counts(config.num_videos);
            let mut splits = vec![Split::Test; config.num_videos];
            for (rank, &i) in order.iter().enumerate() {
                splits[i] = if rank < train {
                    Split::Train
                } else if rank < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
            for (i, split) in splits.into_iter().enumerate() {
                let id = format!("{}_{}_{:03}", domain.name, label, i);
                let video = render_video(config, domain, label, id, video_seed(config.seed, index));
                index += 1;
                out.push(SynthVideo {
                    video,
                    label,
                    split,
                    domain: domain.name.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Writes `videos/*.afv`, `manifest.csv` and one `manifest_<domain>.csv`
/// per domain under `out_dir`; returns the combined manifest.
pub fn generate_dataset(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let video_dir = out_dir.join("videos");
    fs::create_dir_all(&video_dir).map_err(|e| Error::io(&video_dir, e))?;
    let mut manifest = DatasetManifest {
        base_dir: out_dir.to_path_buf(),
        entries: Vec::new(),
    };
    for item in generate_videos(config)? {
        let rel = PathBuf::from("videos").join(format!("{}.afv", item.video.id()));
        write_video(&item.video, out_dir.join(&rel))?;
        manifest.entries.push(ManifestEntry {
            video_path: rel,
            label: item.label,
            split: item.split,
            domain_tag: item.domain,
        });
    }
    write_manifest(&manifest, out_dir.join("manifest.csv"))?;
    for domain in manifest.domains() {
        let part = manifest.filter(|e| e.domain_tag == domain);
        write_manifest(&part, out_dir.join(format!("manifest_{domain}.csv")))?;
    }
    Ok(manifest)
}

/// Mean squared difference between horizontally and vertically adjacent
/// grid cells.
pub fn high_frequency_energy(features: &[f64], grid: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..grid {
        for c in 0..grid {
            let v = features[r * grid + c];
            if c + 1 < grid {
                total += (features[r * grid + c + 1] - v).powi(2);
                count += 1;
            }
            if r + 1 < grid {
                total += (features[(r + 1) * grid + c] - v).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Apex-frame high-frequency energy on a 16x16 grid (or the largest grid
/// the frame allows).
pub fn apex_energy(video: &VideoTensor, sigma: f64) -> Result<f64> {
    let apex = apex_frame(video, sigma)?;
    let grid = crate::model::DEFAULT_GRID.min(video.height()).min(video.width());
    let features = extract_features(&apex.frame, grid)?;
    Ok(high_frequency_energy(&features.values, grid))
}

/// AUC of live-vs-spoof when scoring each labeled video by its negated
/// apex energy (spoof texture raises the energy).
pub fn class_separability_check(manifest: &DatasetManifest, sigma: f64) -> Result<f64> {
    let mut items = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.label != Label::Unlabeled) {
        let video = read_video(manifest.resolve(entry))?;
        items.push((-apex_energy(&video, sigma)?, entry.label));
    }
    let scores = ScoreSet::new(items)?;
    Ok(auc(&roc_curve(&scores)))
}

/// Loads `manifest.csv` written by [`generate_dataset`].
pub fn load_generated(out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    load_manifest(out_dir.as_ref().join("manifest.csv"))
}
