//! Supervised and pseudo-label semi-supervised training of the apex-frame
//! classifier, the LSTM sequence head, and video scoring.
//!
//! The semi-supervised objective is `L = L_labeled + lambda * L_unlabeled`.
//! Pseudo-labels are recomputed every step from the current parameters and
//! only predictions whose top probability reaches the confidence threshold
//! contribute to `L_unlabeled`. The labeling decision is a constant target,
//! so no gradient flows through it.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::apex::{apex_frame, check_sigma, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::metrics::{auc, roc_curve, ScoreSet};
use crate::model::adam::DEFAULT_LEARNING_RATE;
use crate::model::checkpoint::{read_checkpoint, write_checkpoint};
use crate::model::loss::{argmax, cross_entropy};
use crate::model::lstm::lstm_probabilities;
use crate::model::mlp::mlp_probabilities;
use crate::model::{
    adam_step, extract_features, AdamState, FeatureVector, LstmParams, MlpParams, Parameters, Standardizer, Tensor,
    DEFAULT_GRID, DEFAULT_HIDDEN,
};
use crate::segment::{build_unlabeled_pool, segment_apexes, UnlabeledPool, DEFAULT_TEMPORAL_LENGTHS};
use crate::tensor_io::{read_video, DatasetManifest, Frame, Label, Split, VideoTensor};

pub const DEFAULT_LAMBDA: f64 = 1.5;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.9;
pub const DEFAULT_WARMUP_STEPS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub enabled: bool,
    pub max_rotation_deg: f64,
    pub max_translation_px: i64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation {
            enabled: false,
            max_rotation_deg: 10.0,
            max_translation_px: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub confidence_threshold: f64,
    pub sigma: f64,
    pub temporal_lengths: Vec<usize>,
    pub learning_rate: f64,
    pub validation_frequency: usize,
    /// Validations without improvement before stopping.
    pub early_stop_patience: usize,
    /// Smallest drop in validation loss that counts as an improvement when
    /// validation AUC ties.
    pub early_stop_min_delta: f64,
    pub batch_size_labeled: usize,
    pub batch_size_unlabeled: usize,
    pub max_steps: usize,
    /// Supervised-only steps before the unlabeled loss is enabled.
    pub warmup_steps: usize,
    pub seed: u64,
    pub augmentation: Augmentation,
    pub grid: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            sigma: DEFAULT_SIGMA,
            temporal_lengths: DEFAULT_TEMPORAL_LENGTHS.to_vec(),
            learning_rate: DEFAULT_LEARNING_RATE,
            validation_frequency: 30,
            early_stop_patience: 5,
            early_stop_min_delta: 1e-3,
            batch_size_labeled: 32,
            batch_size_unlabeled: 32,
            max_steps: 3000,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            seed: 0,
            augmentation: Augmentation::default(),
            grid: DEFAULT_GRID,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        check_sigma(self.sigma)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return bad("confidence threshold must be in (0, 1]");
        }
        if self.temporal_lengths.is_empty() || self.temporal_lengths.contains(&0) {
            return bad("temporal lengths must be a non-empty list of positive integers");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(self.early_stop_min_delta >= 0.0) || !self.early_stop_min_delta.is_finite() {
            return bad("early-stop min delta must be finite and >= 0");
        }
        if self.validation_frequency == 0 || self.early_stop_patience == 0 {
            return bad("validation frequency and patience must be positive");
        }
        if self.batch_size_labeled == 0 || self.batch_size_unlabeled == 0 || self.max_steps == 0 {
            return bad("batch sizes and max steps must be positive");
        }
        if self.grid == 0 || self.hidden == 0 {
            return bad("grid and hidden width must be positive");
        }
        if self.augmentation.max_rotation_deg < 0.0 || self.augmentation.max_translation_px < 0 {
            return bad("augmentation bounds must be non-negative");
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lengths: Vec<String> = self.temporal_lengths.iter().map(|t| t.to_string()).collect();
        writeln!(f, "lambda={}", self.lambda)?;
        writeln!(f, "tau={}", self.confidence_threshold)?;
        writeln!(f, "sigma={}", self.sigma)?;
        writeln!(f, "temporal_lengths={}", lengths.join(","))?;
        writeln!(f, "learning_rate={}", self.learning_rate)?;
        writeln!(f, "validation_frequency={}", self.validation_frequency)?;
        writeln!(f, "early_stop_patience={}", self.early_stop_patience)?;
        writeln!(f, "early_stop_min_delta={}", self.early_stop_min_delta)?;
        writeln!(f, "batch_size_labeled={}", self.batch_size_labeled)?;
        writeln!(f, "batch_size_unlabeled={}", self.batch_size_unlabeled)?;
        writeln!(f, "max_steps={}", self.max_steps)?;
        writeln!(f, "warmup_steps={}", self.warmup_steps)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "augment={}", self.augmentation.enabled)?;
        writeln!(f, "max_rotation_deg={}", self.augmentation.max_rotation_deg)?;
        writeln!(f, "max_translation_px={}", self.augmentation.max_translation_px)?;
        writeln!(f, "grid={}", self.grid)?;
        write!(f, "hidden={}", self.hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    Ssl,
    SslLstm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::Ssl => "ssl",
            Mode::SslLstm => "ssl+lstm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "supervised" => Ok(Mode::Supervised),
            "ssl" => Ok(Mode::Ssl),
            "ssl+lstm" => Ok(Mode::SslLstm),
            other => Err(format!("unknown mode {other:?} (expected supervised, ssl or ssl+lstm)")),
        }
    }
}

// ---------------------------------------------------------------------------
// Augmentation

/// Nearest-neighbor rotation about the frame center by `rotation_deg`, then
/// an integer shift by `(dx, dy)`. Uncovered pixels are 0.
pub fn augment(frame: &Frame, rotation_deg: f64, dx: i64, dy: i64) -> Frame {
    let (h, w, ch) = (frame.height(), frame.width(), frame.channels());
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = rotation_deg.to_radians().sin_cos();
    let mut pixels = vec![0.0f32; h * w * ch];
    for r in 0..h {
        for c in 0..w {
            let (ry, rx) = (r as i64 - dy, c as i64 - dx);
            if ry < 0 || rx < 0 || ry >= h as i64 || rx >= w as i64 {
                continue;
            }
            let (y, x) = (ry as f64 - cy, rx as f64 - cx);
            let sx = (cos * x + sin * y + cx).round();
            let sy = (-sin * x + cos * y + cy).round();
            if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let (sy, sx) = (sy as usize, sx as usize);
            for k in 0..ch {
                pixels[(r * w + c) * ch + k] = frame.get(sy, sx, k);
            }
        }
    }
    Frame::new(h, w, ch, pixels).expect("augmentation copies in-range pixels")
}

pub fn random_augment<R: Rng + ?Sized>(frame: &Frame, aug: &Augmentation, rng: &mut R) -> Frame {
    let rot = if aug.max_rotation_deg > 0.0 {
        rng.gen_range(-aug.max_rotation_deg..=aug.max_rotation_deg)
    } else {
        0.0
    };
    let t = aug.max_translation_px;
    let dx = rng.gen_range(-t..=t);
    let dy = rng.gen_range(-t..=t);
    augment(frame, rot, dx, dy)
}

// ---------------------------------------------------------------------------
// Data preparation

#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub id: String,
    pub apex: Frame,
    /// Standardized features of `apex`.
    pub features: FeatureVector,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub examples: Vec<LabeledExample>,
    pub standardizer: Standardizer,
    pub grid: usize,
}

fn labeled_entries(manifest: &DatasetManifest, split: Split) -> Vec<(&crate::tensor_io::ManifestEntry, Label)> {
    manifest
        .entries
        .iter()
        .filter(|e| e.split == split && e.label != Label::Unlabeled)
        .map(|e| (e, e.label))
        .collect()
}

fn load(manifest: &DatasetManifest, entry: &crate::tensor_io::ManifestEntry) -> Result<VideoTensor> {
    read_video(manifest.resolve(entry))
}

/// One apex per labeled training video, with features standardized by
/// statistics fitted on those same videos.
pub fn prepare_labeled_set(manifest: &DatasetManifest, sigma: f64, grid: usize) -> Result<LabeledSet> {
    let entries = labeled_entries(manifest, Split::Train);
    if entries.is_empty() {
        return Err(Error::Empty("no labeled training videos".into()));
    }
    let mut raw = Vec::with_capacity(entries.len());
    for (entry, label) in entries {
        let video = load(manifest, entry)?;
        let apex = apex_frame(&video, sigma)?.frame;
        let features = extract_features(&apex, grid)?;
        raw.push((video.id().to_string(), apex, features, label));
    }
    let standardizer = Standardizer::fit(&raw.iter().map(|r| r.2.values.as_slice()).collect::<Vec<_>>())?;
    let examples = raw
        .into_iter()
        .map(|(id, apex, features, label)| {
            Ok(LabeledExample {
                id,
                features: standardizer.apply(&features)?,
                apex,
                label,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LabeledSet {
        examples,
        standardizer,
        grid,
    })
}

fn standardized(frame: &Frame, grid: usize, standardizer: &Standardizer) -> Result<Vec<f64>> {
    Ok(standardizer.apply(&extract_features(frame, grid)?)?.values)
}

/// Standardized feature sequence of a video's segment apexes at length `t`;
/// `None` when the video yields no segment.
pub fn segment_sequence(
    video: &VideoTensor,
    t: usize,
    sigma: f64,
    grid: usize,
    standardizer: &Standardizer,
) -> Result<Option<Vec<Vec<f64>>>> {
    let apexes = segment_apexes(video, t, sigma)?;
    if apexes.is_empty() {
        return Ok(None);
    }
    apexes
        .iter()
        .map(|a| standardized(&a.frame, grid, standardizer))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Unlabeled pool for a manifest: segment apexes of every training video
/// (labels hidden). Single-frame `unlabeled` entries are already apexes and
/// join the pool as they are.
pub fn pool_from_manifest(manifest: &DatasetManifest, temporal_lengths: &[usize], sigma: f64) -> Result<UnlabeledPool> {
    let mut apexes = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.split == Split::Train) {
        let video = load(manifest, entry)?;
        if video.len() == 1 && entry.label == Label::Unlabeled {
            apexes.push(crate::tensor_io::ApexFrame {
                frame: video.frames()[0].clone(),
                source_id: video.id().to_string(),
                segment_start: 1,
                segment_end: 1,
                sigma,
            });
        } else {
            apexes.extend(build_unlabeled_pool(std::slice::from_ref(&video), temporal_lengths, sigma)?.apexes);
        }
    }
    if apexes.is_empty() {
        return Err(Error::Empty("unlabeled pool".into()));
    }
    Ok(UnlabeledPool {
        apexes,
        temporal_lengths: temporal_lengths.to_vec(),
        sigma,
    })
}

// ---------------------------------------------------------------------------
// Models

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub params: MlpParams,
    pub standardizer: Standardizer,
    pub grid: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub params: LstmParams,
    pub standardizer: Standardizer,
    pub grid: usize,
    pub sigma: f64,
    pub temporal_length: usize,
}

fn meta_tensors(standardizer: &Standardizer, grid: usize, sigma: f64, temporal_length: usize) -> Vec<Tensor> {
    let d = standardizer.dim();
    vec![
        Tensor {
            name: "feature.mean".into(),
            shape: vec![d],
            data: standardizer.mean.clone(),
        },
        Tensor {
            name: "feature.scale".into(),
            shape: vec![d],
            data: standardizer.scale.clone(),
        },
        Tensor {
            name: "meta".into(),
            shape: vec![3],
            data: vec![grid as f64, sigma, temporal_length as f64],
        },
    ]
}

fn split_meta(tensors: &mut Vec<Tensor>) -> Result<(Standardizer, usize, f64, usize)> {
    let mut take = |name: &str| -> Result<Tensor> {
        let pos = tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::ShapeMismatch(format!("checkpoint lacks tensor {name}")))?;
        Ok(tensors.remove(pos))
    };
    let mean = take("feature.mean")?.data;
    let scale = take("feature.scale")?.data;
    let meta = take("meta")?.data;
    if meta.len() != 3 || mean.len() != scale.len() {
        return Err(Error::ShapeMismatch("malformed checkpoint metadata".into()));
    }
    let grid = meta[0] as usize;
    if grid * grid != mean.len() {
        return Err(Error::ShapeMismatch(format!(
            "grid {grid} does not match feature dimension {}",
            mean.len()
        )));
    }
    Ok((Standardizer { mean, scale }, grid, meta[1], meta[2] as usize))
}

impl MlpModel {
    pub fn live_probability(&self, frame: &Frame) -> Result<f64> {
        let x = standardized(frame, self.grid, &self.standardizer)?;
        Ok(mlp_probabilities(&self.params, &x)?[1])
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = self.params.tensors().into_iter().cloned().collect();
        out.extend(meta_tensors(&self.standardizer, self.grid, self.sigma, 0));
        out
    }

    pub fn from_tensors(mut tensors: Vec<Tensor>) -> Result<Self> {
        let (standardizer, grid, sigma, _) = split_meta(&mut tensors)?;
        let params = MlpParams::from_tensors(tensors)?;
        if params.input_dim() != standardizer.dim() {
            return Err(Error::ShapeMismatch("MLP input does not match feature dimension".into()));
        }
        Ok(MlpModel {
            params,
            standardizer,
            grid,
            sigma,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(&self.to_tensors(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MlpModel::from_tensors(read_checkpoint(path)?)
    }
}

impl LstmModel {
    /// Live probability from the video's segment sequence. A video too short
    /// to yield a segment is scored from its whole-video apex as a length-1
    /// sequence.
    pub fn live_probability(&self, video: &VideoTensor) -> Result<f64> {
        let seq = match segment_sequence(video, self.temporal_length, self.sigma, self.grid, &self.standardizer)? {
            Some(seq) => seq,
            None => vec![standardized(&apex_frame(video, self.sigma)?.frame, self.grid, &self.standardizer)?],
        };
        Ok(lstm_probabilities(&self.params, &seq)?[1])
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = self.params.tensors().into_iter().cloned().collect();
        out.extend(meta_tensors(&self.standardizer, self.grid, self.sigma, self.temporal_length));
        out
    }

    pub fn from_tensors(mut tensors: Vec<Tensor>) -> Result<Self> {
        let (standardizer, grid, sigma, temporal_length) = split_meta(&mut tensors)?;
        let params = LstmParams::from_tensors(tensors)?;
        if params.input_dim() != standardizer.dim() || temporal_length == 0 {
            return Err(Error::ShapeMismatch("LSTM checkpoint metadata is inconsistent".into()));
        }
        Ok(LstmModel {
            params,
            standardizer,
            grid,
            sigma,
            temporal_length,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(&self.to_tensors(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        LstmModel::from_tensors(read_checkpoint(path)?)
    }
}

// ---------------------------------------------------------------------------
// Pseudo-labeling and the combined step

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    /// Position in the scored batch.
    pub index: usize,
    pub predicted: Label,
    pub confidence: f64,
    pub accepted: bool,
}

pub fn pseudo_label_from_probabilities(index: usize, probabilities: &[f64], tau: f64) -> PseudoLabel {
    let (class, confidence) = argmax(probabilities);
    PseudoLabel {
        index,
        predicted: Label::from_class_index(class),
        confidence,
        accepted: confidence >= tau,
    }
}

pub fn pseudo_label_batch(params: &MlpParams, features: &[&[f64]], tau: f64) -> Result<Vec<PseudoLabel>> {
    features
        .iter()
        .enumerate()
        .map(|(i, x)| Ok(pseudo_label_from_probabilities(i, &mlp_probabilities(params, x)?, tau)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
    pub accepted: usize,
    /// Lowest confidence among accepted pseudo-labels.
    pub min_accepted_confidence: Option<f64>,
}

/// One Adam step on `L_labeled + lambda * L_unlabeled`.
///
/// `L_labeled` is the mean cross-entropy over `labeled`; `L_unlabeled` the
/// mean cross-entropy over accepted pseudo-labels of `unlabeled` (0 when none
/// is accepted). With `lambda == 0` the unlabeled gradient is not formed.
pub fn ssl_step(
    params: &mut MlpParams,
    state: &mut AdamState<MlpParams>,
    labeled: &[(&[f64], usize)],
    unlabeled: &[&[f64]],
    lambda: f64,
    tau: f64,
) -> Result<StepLosses> {
    if labeled.is_empty() {
        return Err(Error::Empty("labeled batch".into()));
    }
    let pseudo = pseudo_label_batch(params, unlabeled, tau)?;
    let accepted: Vec<&PseudoLabel> = pseudo.iter().filter(|p| p.accepted).collect();

    let mut grads = params.zeros_like();
    let weight = 1.0 / labeled.len() as f64;
    let mut labeled_loss = 0.0;
    for (x, label) in labeled {
        let (loss, _) = params.accumulate_gradients(x, *label, weight, &mut grads);
        labeled_loss += loss;
    }
    labeled_loss /= labeled.len() as f64;

    let mut unlabeled_loss = 0.0;
    if !accepted.is_empty() {
        let weight = lambda / accepted.len() as f64;
        for p in &accepted {
            let class = p.predicted.class_index().expect("pseudo-labels are live or spoof");
            let x = unlabeled[p.index];
            if lambda > 0.0 {
                let (loss, _) = params.accumulate_gradients(x, class, weight, &mut grads);
                unlabeled_loss += loss;
            } else {
                let probs = mlp_probabilities(params, x)?;
                unlabeled_loss += cross_entropy(&probs, class);
            }
        }
        unlabeled_loss /= accepted.len() as f64;
    }

    let total = labeled_loss + lambda * unlabeled_loss;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (labeled {labeled_loss}, unlabeled {unlabeled_loss})"
        )));
    }
    adam_step(state, params, &grads)?;
    Ok(StepLosses {
        labeled: labeled_loss,
        unlabeled: unlabeled_loss,
        total,
        accepted: accepted.len(),
        min_accepted_confidence: accepted.iter().map(|p| p.confidence).reduce(f64::min),
    })
}

// ---------------------------------------------------------------------------
// Training loops

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub losses: StepLosses,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub lambda: f64,
    pub steps: Vec<StepLog>,
    pub validations: Vec<(usize, f64)>,
    pub best_step: usize,
    pub best_val_auc: f64,
    pub stop_step: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,l_labeled,l_unlabeled,l,accepted_count,val_auc\n");
        for s in &self.steps {
            let auc = s.val_auc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.step, s.losses.labeled, s.losses.unlabeled, s.losses.total, s.losses.accepted, auc
            )
            .unwrap();
        }
        out
    }
}

/// Shuffled epochs over `0..n`, reshuffled whenever exhausted.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Sampler {
            order: (0..n).collect(),
            pos: n,
            rng,
        };
        s.reshuffle_if_done();
        s
    }

    fn reshuffle_if_done(&mut self) {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
    }

    fn batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            self.reshuffle_if_done();
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_LABELED: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_UNLABELED: u64 = 3;

/// Validation bookkeeping. A validation improves on the best when its AUC is
/// higher, or equal with a mean cross-entropy lower by more than
/// `min_delta`; stopping is only considered once the warm-up is over.
struct EarlyStopping {
    frequency: usize,
    patience: usize,
    min_delta: f64,
    warmup: usize,
    best: Option<(usize, Validation)>,
    since_best: usize,
    history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Validation {
    auc: f64,
    loss: f64,
}

impl EarlyStopping {
    fn new(config: &TrainConfig) -> Self {
        EarlyStopping {
            frequency: config.validation_frequency,
            patience: config.early_stop_patience,
            min_delta: config.early_stop_min_delta,
            warmup: config.warmup_steps,
            best: None,
            since_best: 0,
            history: Vec::new(),
        }
    }

    fn due(&self, step: usize) -> bool {
        step % self.frequency == 0
    }

    /// Records a validation; returns whether it improved on the best.
    fn record(&mut self, step: usize, v: Validation) -> bool {
        self.history.push((step, v.auc));
        let improved = match self.best {
            None => true,
            Some((_, b)) => v.auc > b.auc || (v.auc == b.auc && v.loss < b.loss - self.min_delta),
        };
        if improved {
            self.best = Some((step, v));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        improved
    }

    fn should_stop(&self, step: usize) -> bool {
        step > self.warmup && self.since_best >= self.patience
    }

    fn best(&self) -> (usize, f64) {
        let (step, v) = self.best.expect("at least one validation");
        (step, v.auc)
    }
}

fn validate_with<X>(
    set: &[(X, Label)],
    probabilities: impl Fn(&X) -> Result<[f64; 2]>,
) -> Result<Validation> {
    let mut scores = Vec::with_capacity(set.len());
    let mut loss = 0.0;
    for (x, label) in set {
        let p = probabilities(x)?;
        loss += cross_entropy(&p, label.class_index().expect("validation items are labeled"));
        scores.push((p[1], *label));
    }
    Ok(Validation {
        auc: auc(&roc_curve(&ScoreSet::new(scores)?)),
        loss: loss / set.len() as f64,
    })
}

fn mlp_validation(params: &MlpParams, set: &[(Vec<f64>, Label)]) -> Result<Validation> {
    validate_with(set, |x| mlp_probabilities(params, x))
}

fn lstm_validation(params: &LstmParams, set: &[(Vec<Vec<f64>>, Label)]) -> Result<Validation> {
    validate_with(set, |x| lstm_probabilities(params, x))
}

fn validation_set(manifest: &DatasetManifest, sigma: f64, grid: usize, standardizer: &Standardizer) -> Result<Vec<(Vec<f64>, Label)>> {
    let entries = labeled_entries(manifest, Split::Val);
    if entries.is_empty() {
        return Err(Error::Empty("no labeled validation videos".into()));
    }
    entries
        .into_iter()
        .map(|(entry, label)| {
            let video = load(manifest, entry)?;
            Ok((standardized(&apex_frame(&video, sigma)?.frame, grid, standardizer)?, label))
        })
        .collect()
}

fn train_mlp(
    labeled: &LabeledSet,
    val: &[(Vec<f64>, Label)],
    pool: Option<&[Vec<f64>]>,
    lambda: f64,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    let dim = labeled.grid * labeled.grid;
    let mut params = MlpParams::init(dim, config.hidden, &mut stream(config.seed, STREAM_INIT));
    let mut state = AdamState::new(&params, config.learning_rate);
    let mut labeled_sampler = Sampler::new(labeled.examples.len(), stream(config.seed, STREAM_LABELED));
    let mut augment_rng = stream(config.seed, STREAM_AUGMENT);
    let mut pool_sampler = pool.map(|p| Sampler::new(p.len(), stream(config.seed, STREAM_UNLABELED)));
    let mut stopper = EarlyStopping::new(config);
    let mut best = params.clone();
    let mut steps = Vec::new();
    let mut stop_reason = StopReason::MaxSteps;

    for step in 1..=config.max_steps {
        let indices = labeled_sampler.batch(config.batch_size_labeled);
        let features: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| {
                let ex = &labeled.examples[i];
                if config.augmentation.enabled {
                    let frame = random_augment(&ex.apex, &config.augmentation, &mut augment_rng);
                    standardized(&frame, labeled.grid, &labeled.standardizer)
                } else {
                    Ok(ex.features.values.clone())
                }
            })
            .collect::<Result<_>>()?;
        let batch: Vec<(&[f64], usize)> = features
            .iter()
            .zip(&indices)
            .map(|(x, &i)| (x.as_slice(), labeled.examples[i].label.class_index().unwrap()))
            .collect();

        let unlabeled: Vec<&[f64]> = match (pool, pool_sampler.as_mut()) {
            (Some(pool), Some(sampler)) if step > config.warmup_steps => sampler
                .batch(config.batch_size_unlabeled)
                .into_iter()
                .map(|i| pool[i].as_slice())
                .collect(),
            _ => Vec::new(),
        };

        let losses = ssl_step(
            &mut params,
            &mut state,
            &batch,
            &unlabeled,
            lambda,
            config.confidence_threshold,
        )
        .map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("step {step}: {m}")),
            other => other,
        })?;

        let mut val_auc = None;
        if stopper.due(step) {
            let v = mlp_validation(&params, val)?;
            debug!(
                "step {step}: loss {:.5} accepted {} val_auc {:.4} val_loss {:.5}",
                losses.total, losses.accepted, v.auc, v.loss
            );
            val_auc = Some(v.auc);
            if stopper.record(step, v) {
                best = params.clone();
            }
        }
        steps.push(StepLog { step, losses, val_auc });
        if stopper.should_stop(step) {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let stop_step = steps.len();
    if stopper.best.is_none() {
        // Fewer steps than one validation period.
        let v = mlp_validation(&params, val)?;
        stopper.record(stop_step, v);
        steps.last_mut().unwrap().val_auc = Some(v.auc);
        best = params.clone();
    }
    let (best_step, best_val_auc) = stopper.best();
    let model = MlpModel {
        params: best,
        standardizer: labeled.standardizer.clone(),
        grid: labeled.grid,
        sigma: config.sigma,
    };
    Ok((
        model,
        TrainReport {
            lambda,
            steps,
            validations: stopper.history,
            best_step,
            best_val_auc,
            stop_step,
            stop_reason,
        },
    ))
}

/// Supervised baseline: the combined step with `lambda = 0` and no pool.
pub fn train_supervised(manifest: &DatasetManifest, config: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    let labeled = prepare_labeled_set(manifest, config.sigma, config.grid)?;
    let val = validation_set(manifest, config.sigma, config.grid, &labeled.standardizer)?;
    train_mlp(&labeled, &val, None, 0.0, config)
}

/// Supervised warm-up, then pseudo-labeled training on `pool` with the
/// configured `lambda`.
pub fn train_semi_supervised(
    manifest: &DatasetManifest,
    pool: &UnlabeledPool,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::Empty("unlabeled pool".into()));
    }
    let labeled = prepare_labeled_set(manifest, config.sigma, config.grid)?;
    let val = validation_set(manifest, config.sigma, config.grid, &labeled.standardizer)?;
    let pool_features = pool
        .apexes
        .iter()
        .map(|a| standardized(&a.frame, config.grid, &labeled.standardizer))
        .collect::<Result<Vec<_>>>()?;
    train_mlp(&labeled, &val, Some(&pool_features), config.lambda, config)
}

fn sequence_set(
    manifest: &DatasetManifest,
    split: Split,
    t: usize,
    mlp: &MlpModel,
) -> Result<Vec<(Vec<Vec<f64>>, Label)>> {
    let mut out = Vec::new();
    for (entry, label) in labeled_entries(manifest, split) {
        let video = load(manifest, entry)?;
        match segment_sequence(&video, t, mlp.sigma, mlp.grid, &mlp.standardizer)? {
            Some(seq) => out.push((seq, label)),
            None => warn!("skipping {}: {} frames yield no segment at T={t}", video.id(), video.len()),
        }
    }
    Ok(out)
}

/// Trains the LSTM head on per-segment apex feature sequences at the first
/// configured temporal length, reusing the classifier's feature statistics.
pub fn train_lstm_head(
    manifest: &DatasetManifest,
    mlp: &MlpModel,
    config: &TrainConfig,
) -> Result<(LstmModel, TrainReport)> {
    config.validate()?;
    let t = config.temporal_lengths[0];
    let train = sequence_set(manifest, Split::Train, t, mlp)?;
    if train.is_empty() {
        return Err(Error::Empty(format!("no training video yields a segment at T={t}")));
    }
    let val = sequence_set(manifest, Split::Val, t, mlp)?;
    if val.is_empty() {
        return Err(Error::Empty(format!("no validation video yields a segment at T={t}")));
    }

    let dim = mlp.standardizer.dim();
    let mut params = LstmParams::init(dim, config.hidden, &mut stream(config.seed, STREAM_INIT));
    let mut state = AdamState::new(&params, config.learning_rate);
    let mut sampler = Sampler::new(train.len(), stream(config.seed, STREAM_LABELED));
    let mut stopper = EarlyStopping::new(config);
    let mut best = params.clone();
    let mut steps = Vec::new();
    let mut stop_reason = StopReason::MaxSteps;

    for step in 1..=config.max_steps {
        let indices = sampler.batch(config.batch_size_labeled);
        let weight = 1.0 / indices.len() as f64;
        let mut grads = params.zeros_like();
        let batch: Vec<(&[Vec<f64>], usize)> = indices
            .iter()
            .map(|&i| (train[i].0.as_slice(), train[i].1.class_index().unwrap()))
            .collect();
        let loss = params
            .accumulate_batch_gradients(&batch, weight, &mut grads)
            .iter()
            .map(|(l, _)| l)
            .sum::<f64>()
            / indices.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("step {step}: non-finite LSTM loss")));
        }
        adam_step(&mut state, &mut params, &grads)?;

        let mut val_auc = None;
        if stopper.due(step) {
            let v = lstm_validation(&params, &val)?;
            debug!("lstm step {step}: loss {loss:.5} val_auc {:.4} val_loss {:.5}", v.auc, v.loss);
            val_auc = Some(v.auc);
            if stopper.record(step, v) {
                best = params.clone();
            }
        }
        steps.push(StepLog {
            step,
            losses: StepLosses {
                labeled: loss,
                unlabeled: 0.0,
                total: loss,
                accepted: 0,
                min_accepted_confidence: None,
            },
            val_auc,
        });
        if stopper.should_stop(step) {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let stop_step = steps.len();
    if stopper.best.is_none() {
        let v = lstm_validation(&params, &val)?;
        stopper.record(stop_step, v);
        steps.last_mut().unwrap().val_auc = Some(v.auc);
        best = params.clone();
    }
    let (best_step, best_val_auc) = stopper.best();
    Ok((
        LstmModel {
            params: best,
            standardizer: mlp.standardizer.clone(),
            grid: mlp.grid,
            sigma: mlp.sigma,
            temporal_length: t,
        },
        TrainReport {
            lambda: 0.0,
            steps,
            validations: stopper.history,
            best_step,
            best_val_auc,
            stop_step,
            stop_reason,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub mode: Mode,
    pub mlp: MlpModel,
    pub mlp_report: TrainReport,
    pub lstm: Option<(LstmModel, TrainReport)>,
}

impl TrainOutcome {
    pub fn models(&self) -> TrainedModels {
        TrainedModels {
            mlp: Some(self.mlp.clone()),
            lstm: self.lstm.as_ref().map(|l| l.0.clone()),
        }
    }
}

/// Trains the models of one ablation mode on `manifest`.
pub fn run_training(manifest: &DatasetManifest, mode: Mode, config: &TrainConfig) -> Result<TrainOutcome> {
    let (mlp, mlp_report) = match mode {
        Mode::Supervised => train_supervised(manifest, config)?,
        Mode::Ssl | Mode::SslLstm => {
            let pool = pool_from_manifest(manifest, &config.temporal_lengths, config.sigma)?;
            train_semi_supervised(manifest, &pool, config)?
        }
    };
    let lstm = match mode {
        Mode::SslLstm => Some(train_lstm_head(manifest, &mlp, config)?),
        _ => None,
    };
    Ok(TrainOutcome {
        mode,
        mlp,
        mlp_report,
        lstm,
    })
}

// ---------------------------------------------------------------------------
// Scoring

#[derive(Debug, Clone, Default)]
pub struct TrainedModels {
    pub mlp: Option<MlpModel>,
    pub lstm: Option<LstmModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub id: String,
    pub label: Label,
    /// Live probability.
    pub score: f64,
}

/// Live probability of every video in `manifest`: the classifier on the
/// whole-video apex for `supervised`/`ssl`, the LSTM on the segment sequence
/// for `ssl+lstm`.
pub fn score_videos(models: &TrainedModels, manifest: &DatasetManifest, mode: Mode) -> Result<Vec<VideoScore>> {
    manifest
        .entries
        .iter()
        .map(|entry| {
            let video = load(manifest, entry)?;
            let score = match mode {
                Mode::Supervised | Mode::Ssl => {
                    let mlp = models.mlp.as_ref().ok_or(Error::MissingModel("classifier"))?;
                    mlp.live_probability(&apex_frame(&video, mlp.sigma)?.frame)?
                }
                Mode::SslLstm => models
                    .lstm
                    .as_ref()
                    .ok_or(Error::MissingModel("LSTM"))?
                    .live_probability(&video)?,
            };
            Ok(VideoScore {
                id: video.id().to_string(),
                label: entry.label,
                score,
            })
        })
        .collect()
}

/// Labeled scores as a [`ScoreSet`].
pub fn score_set(scores: &[VideoScore]) -> Result<ScoreSet> {
    ScoreSet::new(
        scores
            .iter()
            .filter(|s| s.label != Label::Unlabeled)
            .map(|s| (s.score, s.label))
            .collect(),
    )
}
