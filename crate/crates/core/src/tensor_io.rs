//! Video, frame and manifest containers and their on-disk formats.
//!
//! `AFV1` layout: the magic bytes `AFV1`, four little-endian `u32`
//! (num_frames, height, width, channels), then frame-major, row-major
//! little-endian `f32` pixels with channels interleaved.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const VIDEO_MAGIC: &[u8; 4] = b"AFV1";
const HEADER_LEN: u64 = 20;

/// One image: `height * width * channels` pixels in `[0, 1]`, row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {height}x{width}x{channels} frame",
                pixels.len()
            )));
        }
        if let Some(&value) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::PixelOutOfRange { value });
        }
        Ok(Frame {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Frame::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Mean over channels, row-major.
    pub fn grayscale(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(self.channels)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / self.channels as f64)
            .collect()
    }
}

/// An ordered, non-empty stack of equally shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    id: String,
    frames: Vec<Frame>,
}

impl VideoTensor {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Empty("video has zero frames".into()))?;
        if let Some((index, bad)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::ShapeMismatch(format!(
                "frame {} is {}x{}x{}, frame 1 is {}x{}x{}",
                index + 1,
                bad.height,
                bad.width,
                bad.channels,
                first.height,
                first.width,
                first.channels
            )));
        }
        Ok(VideoTensor {
            id: id.into(),
            frames,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }
}

/// A frame condensed from the frames `segment_start..=segment_end` (1-based)
/// of the source video.
#[derive(Debug, Clone, PartialEq)]
pub struct ApexFrame {
    pub frame: Frame,
    pub source_id: String,
    pub segment_start: usize,
    pub segment_end: usize,
    pub sigma: f64,
}

impl ApexFrame {
    /// Wraps the apex as a single-frame video so it can be stored as `AFV1`.
    pub fn to_video(&self) -> VideoTensor {
        VideoTensor {
            id: format!(
                "{}_{}_{}",
                self.source_id, self.segment_start, self.segment_end
            ),
            frames: vec![self.frame.clone()],
        }
    }
}

pub fn encode_video(video: &VideoTensor) -> Vec<u8> {
    let per_frame = video.height() * video.width() * video.channels();
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * per_frame * video.len());
    out.extend_from_slice(VIDEO_MAGIC);
    for dim in [video.len(), video.height(), video.width(), video.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for frame in video.frames() {
        for &v in frame.pixels() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_video(id: impl Into<String>, bytes: &[u8], path: &Path) -> Result<VideoTensor> {
    if bytes.len() < 4 || &bytes[..4] != VIDEO_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "AFV1",
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            actual: bytes.len() as u64,
        });
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as u64;
    let (n, h, w, c) = (field(0), field(1), field(2), field(3));
    let expected = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::ShapeMismatch(format!("header dimensions overflow: {n}x{h}x{w}x{c}")))?;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    if n == 0 {
        return Err(Error::Empty(format!("{}: zero frames", path.display())));
    }
    let (h, w, c) = (h as usize, w as usize, c as usize);
    let per_frame = h * w * c;
    let frames = bytes[HEADER_LEN as usize..]
        .chunks_exact(4 * per_frame)
        .map(|chunk| {
            let pixels = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Frame::new(h, w, c, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoTensor::new(id, frames)
}

pub fn write_video(video: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_video(video)).map_err(|e| Error::io(path, e))
}

/// Reads an `AFV1` file. The video id is the file stem.
pub fn read_video(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_video(id, &bytes, path)
}

/// Binary PGM (1 channel) or PPM (3 channels) at maxval 255.
pub fn encode_frame_image(frame: &Frame) -> Vec<u8> {
    let tag = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{tag}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|&v| to_byte(v)));
    out
}

fn to_byte(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_frame_image(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_frame_image(frame)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Live,
    Spoof,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::Spoof => "spoof",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// Classifier output index: spoof = 0, live = 1.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Spoof => Some(0),
            Label::Live => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn from_class_index(index: usize) -> Label {
        if index == 1 {
            Label::Live
        } else {
            Label::Spoof
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(Label::Live),
            "spoof" => Ok(Label::Spoof),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Path as written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub video_path: PathBuf,
    pub label: Label,
    pub split: Split,
    pub domain_tag: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.video_path.is_absolute() {
            entry.video_path.clone()
        } else {
            self.base_dir.join(&entry.video_path)
        }
    }

    /// Parses `path,label,split,domain_tag` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>, source: &Path) -> Result<Self> {
        let mut manifest = DatasetManifest {
            base_dir: base_dir.into(),
            entries: Vec::new(),
        };
        let mut seen = HashSet::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Manifest {
                path: source.to_path_buf(),
                line: index + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            if fields[0].is_empty() {
                return Err(err("empty path".into()));
            }
            let entry = ManifestEntry {
                video_path: PathBuf::from(fields[0]),
                label: fields[1].parse().map_err(err)?,
                split: fields[2].parse().map_err(err)?,
                domain_tag: fields[3].to_string(),
            };
            if !seen.insert(entry.video_path.clone()) {
                return Err(err(format!("duplicate path {}", fields[0])));
            }
            manifest.entries.push(entry);
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{}\n",
                    e.video_path.display(),
                    e.label,
                    e.split,
                    e.domain_tag
                )
            })
            .collect()
    }

    pub fn filter(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            base_dir: self.base_dir.clone(),
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn split(&self, split: Split) -> DatasetManifest {
        self.filter(|e| e.split == split)
    }

    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.domain_tag) {
                out.push(e.domain_tag.clone());
            }
        }
        out
    }
}

/// Loads a manifest and checks every referenced video exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::parse(&text, base, path)?;
    for (line, entry) in manifest.entries.iter().enumerate() {
        let resolved = manifest.resolve(entry);
        if !resolved.is_file() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: line + 1,
                message: format!("missing file {}", resolved.display()),
            });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(manifest.to_text().as_bytes())
        .map_err(|e| Error::io(path, e))
}
