//! Frame sequence loading and luminance access.
//!
//! Three uncompressed on-disk layouts are understood: YUV4MPEG2 streams,
//! directories of binary PGM (P5) files, and headerless planar raw luma with
//! a small text descriptor next to it. Compressed video has to be transcoded
//! beforehand, e.g. `ffmpeg -i in.mp4 -pix_fmt gray -f yuv4mpegpipe out.y4m`.
//!
//! Samples are kept at their native depth (8-bit, 16-bit or f32) and exposed
//! as normalized luma in `[0, 1]`.

mod pgm;
mod raw;
mod y4m;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use pgm::encode_pgm;
pub use pgm::{read_pgm, write_pgm_sequence};
pub use raw::{write_raw_planar, RawDescriptor};
pub use y4m::write_y4m;

/// BT.601 luma weights for (R, G, B).
pub const BT601_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Frames per second as an exact ratio, e.g. 30000/1001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub const NTSC: FrameRate = FrameRate { num: 30000, den: 1001 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::config(format!("frame rate {num}/{den} must be positive")));
        }
        Ok(FrameRate { num, den })
    }

    pub fn hz(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for FrameRate {
    type Err = Error;

    /// Accepts `30000/1001`, `30000:1001` or a plain integer.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("cannot parse frame rate {s:?}"));
        match s.split_once(['/', ':']) {
            Some((n, d)) => FrameRate::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => FrameRate::new(s.parse().map_err(|_| bad())?, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub frame_count: usize,
    /// 8 or 16 for integer samples (anything in 1..=16 is accepted), 32 for float samples.
    pub bit_depth: u8,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::MalformedHeader(format!("dimensions {}x{}", self.width, self.height)));
        }
        if self.frame_count == 0 {
            return Err(Error::EmptySequence);
        }
        if !(1..=16).contains(&self.bit_depth) && self.bit_depth != 32 {
            return Err(Error::MalformedHeader(format!("bit depth {}", self.bit_depth)));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn fps(&self) -> f64 {
        self.frame_rate.hz()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count as f64 * self.frame_rate.den as f64 / self.frame_rate.num as f64
    }

    /// Number of frames covering `seconds`, rounded up.
    pub fn frames_for_seconds(frame_rate: FrameRate, seconds: f64) -> usize {
        (seconds * frame_rate.hz() - 1e-9).ceil().max(0.0) as usize
    }

    fn max_code(&self) -> f32 {
        ((1u32 << self.bit_depth.min(16)) - 1) as f32
    }
}

/// One decoded luma frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub luma: Vec<f32>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, luma: Vec<f32>) -> Result<Self> {
        if luma.len() != width * height {
            return Err(Error::LengthMismatch(luma.len(), width * height));
        }
        if luma.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("luma samples must lie in [0, 1]"));
        }
        Ok(Frame { index, width, height, luma })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.luma[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Samples {
    /// Codes plus their normalized values.
    U8(Vec<u8>, Box<[f32; 256]>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

/// An immutable clip: all frames stored contiguously, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    meta: VideoMeta,
    samples: Samples,
}

impl FrameSequence {
    pub fn from_u8(meta: VideoMeta, data: Vec<u8>) -> Result<Self> {
        meta.validate()?;
        if meta.bit_depth > 8 {
            return Err(Error::MalformedHeader(format!("{}-bit samples stored as u8", meta.bit_depth)));
        }
        Self::check_len(&meta, data.len())?;
        let max = meta.max_code();
        let lut = Box::new(std::array::from_fn(|c| c as f32 / max));
        Ok(FrameSequence { meta, samples: Samples::U8(data, lut) })
    }

    pub fn from_u16(meta: VideoMeta, data: Vec<u16>) -> Result<Self> {
        meta.validate()?;
        if meta.bit_depth == 32 {
            return Err(Error::MalformedHeader("float depth stored as u16".into()));
        }
        Self::check_len(&meta, data.len())?;
        let max = meta.max_code() as u16;
        if data.iter().any(|&v| v > max) {
            return Err(Error::MalformedHeader(format!("sample exceeds {}-bit range", meta.bit_depth)));
        }
        Ok(FrameSequence { meta, samples: Samples::U16(data) })
    }

    /// Float samples; `meta.bit_depth` is forced to 32.
    pub fn from_f32(mut meta: VideoMeta, data: Vec<f32>) -> Result<Self> {
        meta.bit_depth = 32;
        meta.validate()?;
        Self::check_len(&meta, data.len())?;
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("luma samples must lie in [0, 1]"));
        }
        Ok(FrameSequence { meta, samples: Samples::F32(data) })
    }

    /// Builds a sequence from decoded frames (stored as f32).
    pub fn from_frames(width: usize, height: usize, frame_rate: FrameRate, frames: Vec<Frame>) -> Result<Self> {
        let meta = VideoMeta { width, height, frame_rate, frame_count: frames.len(), bit_depth: 32 };
        let mut data = Vec::with_capacity(width * height * frames.len());
        for (i, f) in frames.into_iter().enumerate() {
            if f.width != width || f.height != height {
                return Err(Error::MalformedHeader(format!("frame {i} is {}x{}", f.width, f.height)));
            }
            data.extend_from_slice(&f.luma);
        }
        Self::from_f32(meta, data)
    }

    fn check_len(meta: &VideoMeta, len: usize) -> Result<()> {
        let want = meta.pixels() * meta.frame_count;
        if len != want {
            return Err(Error::TruncatedStream(format!("{len} samples, header implies {want}")));
        }
        Ok(())
    }

    pub fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.meta.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.meta.frame_count == 0
    }

    /// Keeps only the first `max_frames` frames.
    pub fn truncate(&mut self, max_frames: usize) {
        if max_frames >= self.meta.frame_count || max_frames == 0 {
            return;
        }
        let keep = max_frames * self.meta.pixels();
        match &mut self.samples {
            Samples::U8(v, _) => v.truncate(keep),
            Samples::U16(v) => v.truncate(keep),
            Samples::F32(v) => v.truncate(keep),
        }
        self.meta.frame_count = max_frames;
    }

    /// Normalized luma of pixel `(x, y)` in frame `n`.
    #[inline]
    pub fn sample(&self, n: usize, x: usize, y: usize) -> f32 {
        let i = (n * self.meta.height + y) * self.meta.width + x;
        self.sample_at(i)
    }

    #[inline]
    fn sample_at(&self, i: usize) -> f32 {
        match &self.samples {
            Samples::U8(v, lut) => lut[v[i] as usize],
            Samples::U16(v) => v[i] as f32 / self.meta.max_code(),
            Samples::F32(v) => v[i],
        }
    }

    /// Writes `len` consecutive normalized samples of frame `n`, starting at
    /// pixel offset `start`, into `out`.
    pub fn copy_span(&self, n: usize, start: usize, out: &mut [f32]) {
        let base = n * self.meta.pixels() + start;
        let max = self.meta.max_code();
        match &self.samples {
            Samples::U8(v, lut) => out.iter_mut().zip(&v[base..]).for_each(|(o, &s)| *o = lut[s as usize]),
            Samples::U16(v) => out.iter_mut().zip(&v[base..]).for_each(|(o, &s)| *o = s as f32 / max),
            Samples::F32(v) => out.copy_from_slice(&v[base..base + out.len()]),
        }
    }

    pub fn frame(&self, n: usize) -> Frame {
        let mut luma = vec![0.0; self.meta.pixels()];
        self.copy_span(n, 0, &mut luma);
        Frame { index: n, width: self.meta.width, height: self.meta.height, luma }
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.len()).map(move |n| self.frame(n))
    }

    /// Mean luma of every frame.
    pub fn frame_means(&self) -> Vec<f64> {
        let px = self.meta.pixels();
        let mut buf = vec![0.0f32; px];
        (0..self.len())
            .map(|n| {
                self.copy_span(n, 0, &mut buf);
                buf.iter().map(|&v| v as f64).sum::<f64>() / px as f64
            })
            .collect()
    }

    /// Raw integer codes (`None` for float storage), used by the writers.
    pub(crate) fn codes(&self, n: usize) -> Option<Vec<u16>> {
        let px = self.meta.pixels();
        let r = n * px..(n + 1) * px;
        match &self.samples {
            Samples::U8(v, _) => Some(v[r].iter().map(|&s| s as u16).collect()),
            Samples::U16(v) => Some(v[r].to_vec()),
            Samples::F32(_) => None,
        }
    }

    /// Integer codes at the given depth, quantizing float storage if needed.
    pub(crate) fn codes_at_depth(&self, n: usize, bit_depth: u8) -> Vec<u16> {
        if self.meta.bit_depth == bit_depth {
            if let Some(c) = self.codes(n) {
                return c;
            }
        }
        let max = ((1u32 << bit_depth) - 1) as f32;
        self.frame(n).luma.iter().map(|&v| (v * max).round().clamp(0.0, max) as u16).collect()
    }
}

/// BT.601 luma of a normalized RGB triple.
pub fn to_luminance(r: f32, g: f32, b: f32) -> f32 {
    to_luminance_with(r, g, b, BT601_WEIGHTS)
}

pub fn to_luminance_with(r: f32, g: f32, b: f32, weights: [f32; 3]) -> f32 {
    let y = weights[0] * r + weights[1] * g + weights[2] * b;
    y.clamp(0.0, 1.0)
}

/// Index of the middle frame, `floor(N / 2)` on 0-based indices.
pub fn representative_frame_index(frame_count: usize) -> Result<usize> {
    if frame_count == 0 {
        return Err(Error::EmptySequence);
    }
    Ok(frame_count / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    Y4m,
    PgmSequence,
    RawPlanar,
}

impl InputFormat {
    /// Guesses from the path: directories are PGM sequences, `.y4m` is Y4M,
    /// everything else is raw planar.
    pub fn infer(path: &Path) -> InputFormat {
        if path.is_dir() {
            InputFormat::PgmSequence
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
            InputFormat::Y4m
        } else {
            InputFormat::RawPlanar
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "y4m" => Ok(InputFormat::Y4m),
            "pgm" | "pgm_sequence" | "pgm-sequence" => Ok(InputFormat::PgmSequence),
            "raw" | "raw_planar" | "raw-planar" => Ok(InputFormat::RawPlanar),
            other => Err(Error::config(format!("unknown input format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Frame rate for formats that do not carry one (PGM sequences).
    pub frame_rate: FrameRate,
    /// Stop after this many frames.
    pub max_frames: Option<usize>,
    /// Stop after this many seconds of frames (at the clip's own rate).
    pub max_seconds: Option<f64>,
}

impl LoadOptions {
    /// Frame cap for a clip running at `rate`.
    pub fn frame_limit(&self, rate: FrameRate) -> Option<usize> {
        let by_time = self.max_seconds.map(|s| VideoMeta::frames_for_seconds(rate, s).max(1));
        match (self.max_frames, by_time) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { frame_rate: FrameRate::NTSC, max_frames: None, max_seconds: None }
    }
}

pub fn load_frame_sequence(path: &Path, format: InputFormat) -> Result<FrameSequence> {
    load_frame_sequence_with(path, format, &LoadOptions::default())
}

pub fn load_frame_sequence_with(path: &Path, format: InputFormat, opts: &LoadOptions) -> Result<FrameSequence> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    match format {
        InputFormat::Y4m => y4m::read_y4m(path, opts),
        InputFormat::PgmSequence => pgm::read_pgm_sequence(path, opts),
        InputFormat::RawPlanar => raw::read_raw_planar(path, opts),
    }
}
