//! Per-region intensity traces and STFT-based ENF tracking.
//!
//! Mains-powered light flickers at twice the grid frequency. Video frame
//! rates are far below that, so the flicker shows up folded to
//! `|f_l - k*f_s|`, about 10.09 Hz for 100 Hz flicker at 29.97 fps. Each
//! region's mean-luma trace is cut into long overlapping windows; in every
//! window the strongest spectral bin near the expected alias is refined by a
//! three-point parabola and reported as that window's frequency.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FrameSequence, VideoMeta};
use crate::steady::SteadySuperpixelSet;

/// Mean luma of one region's steady pixels, one value per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySeries {
    pub values: Vec<f64>,
    pub region_label: u32,
}

impl IntensitySeries {
    pub fn new(values: Vec<f64>, region_label: u32) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("intensity values must lie in [0, 1]"));
        }
        Ok(IntensitySeries { values, region_label })
    }
}

/// Candidate ENF track in Hz, one value per STFT hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnfVector {
    pub values: Vec<f64>,
    pub region_label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowFunction {
    Hann,
    Rect,
}

impl std::str::FromStr for WindowFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(WindowFunction::Hann),
            "rect" | "rectangular" => Ok(WindowFunction::Rect),
            other => Err(Error::config(format!("unknown window function {other:?}"))),
        }
    }
}

impl std::fmt::Display for WindowFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowFunction::Hann => "hann",
            WindowFunction::Rect => "rect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_seconds: f64,
    pub hop_seconds: f64,
    pub window_function: WindowFunction,
    pub zero_pad_factor: usize,
    pub band_center_hz: f64,
    pub band_halfwidth_hz: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_seconds: 20.0,
            hop_seconds: 1.0,
            window_function: WindowFunction::Hann,
            zero_pad_factor: 4,
            // 100 Hz flicker seen at 30000/1001 fps
            band_center_hz: 100.0 - 3.0 * 30000.0 / 1001.0,
            band_halfwidth_hz: 0.5,
        }
    }
}

impl StftConfig {
    pub fn validate(&self, frame_rate_hz: f64) -> Result<()> {
        if !(self.hop_seconds > 0.0 && self.window_seconds > self.hop_seconds) {
            return Err(Error::config("stft requires window_seconds > hop_seconds > 0"));
        }
        if self.zero_pad_factor == 0 {
            return Err(Error::config("stft.zero_pad_factor must be >= 1"));
        }
        let nyq = frame_rate_hz / 2.0;
        let (lo, hi) = (self.band_center_hz - self.band_halfwidth_hz, self.band_center_hz + self.band_halfwidth_hz);
        if !(self.band_halfwidth_hz > 0.0 && lo > 0.0 && hi < nyq) {
            return Err(Error::config(format!("search band {lo:.4}..{hi:.4} Hz must lie inside (0, {nyq:.4}) Hz")));
        }
        Ok(())
    }

    /// Band limits in Hz.
    pub fn band(&self) -> (f64, f64) {
        (self.band_center_hz - self.band_halfwidth_hz, self.band_center_hz + self.band_halfwidth_hz)
    }
}

/// Apparent frequency of `f_l` sampled at `f_s`: the fold `|f_l - k*f_s|`
/// that lands below `f_s / 2`.
pub fn alias_frequency(f_l: f64, f_s: f64) -> Result<f64> {
    if !(f_l > 0.0 && f_s > 0.0) {
        return Err(Error::config("alias_frequency needs positive frequencies"));
    }
    let k = (f_l / f_s).round();
    let fa = (f_l - k * f_s).abs();
    if (fa - f_s / 2.0).abs() <= 1e-12 * f_s {
        return Err(Error::NyquistBoundary { freq_hz: f_l, sample_rate_hz: f_s });
    }
    Ok(fa)
}

/// Vertex of the parabola through three neighbouring magnitudes, in Hz.
/// The offset from `bin_index` is clamped to half a bin; a flat triple
/// yields the bin itself.
pub fn quadratic_interp_peak(m_prev: f64, m_peak: f64, m_next: f64, bin_index: usize, bin_width_hz: f64) -> Result<f64> {
    if m_peak < m_prev || m_peak < m_next {
        return Err(Error::NotALocalMax);
    }
    let denom = m_prev - 2.0 * m_peak + m_next;
    let delta = if denom == 0.0 { 0.0 } else { (0.5 * (m_prev - m_next) / denom).clamp(-0.5, 0.5) };
    Ok((bin_index as f64 + delta) * bin_width_hz)
}

pub fn mean_intensity_series(seq: &FrameSequence, region: &[(u32, u32)], region_label: u32) -> Result<IntensitySeries> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let meta = seq.meta();
    if region.iter().any(|&(x, y)| x as usize >= meta.width || y as usize >= meta.height) {
        return Err(Error::config("region coordinate outside the frame"));
    }
    let k = region.len() as f64;
    let values = (0..seq.len())
        .map(|n| region.iter().map(|&(x, y)| seq.sample(n, x as usize, y as usize) as f64).sum::<f64>() / k)
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    IntensitySeries::new(values, region_label)
}

/// [`mean_intensity_series`] for every region of the set in one pass over
/// the frames.
pub fn region_series(seq: &FrameSequence, set: &SteadySuperpixelSet) -> Result<Vec<IntensitySeries>> {
    let meta = seq.meta();
    let mut index: Vec<Vec<usize>> = Vec::with_capacity(set.count());
    for r in &set.regions {
        if r.pixels.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if r.pixels.iter().any(|&(x, y)| x as usize >= meta.width || y as usize >= meta.height) {
            return Err(Error::config("region coordinate outside the frame"));
        }
        index.push(r.pixels.iter().map(|&(x, y)| y as usize * meta.width + x as usize).collect());
    }
    let px = meta.pixels();
    let per_frame: Vec<Vec<f64>> = (0..seq.len())
        .into_par_iter()
        .map_init(
            || vec![0.0f32; px],
            |buf, n| {
                seq.copy_span(n, 0, buf);
                index.iter().map(|ix| ix.iter().map(|&i| buf[i] as f64).sum::<f64>() / ix.len() as f64).collect()
            },
        )
        .collect();
    set.regions
        .iter()
        .enumerate()
        .map(|(k, r)| IntensitySeries::new(per_frame.iter().map(|f| f[k].clamp(0.0, 1.0)).collect(), r.label))
        .collect()
}

/// Length of the ENF vector: `floor((duration - window) / hop) + 1`.
pub fn enf_vector_len(meta: &VideoMeta, config: &StftConfig) -> usize {
    let span = (meta.duration_seconds() - config.window_seconds) / config.hop_seconds;
    if span < -1e-9 {
        0
    } else {
        (span + 1e-9).floor() as usize + 1
    }
}

/// Precomputed window, FFT plan and band for one clip geometry.
pub struct EnfEstimator {
    config: StftConfig,
    window: Vec<f64>,
    starts: Vec<usize>,
    nfft: usize,
    bin_width: f64,
    bins: (usize, usize),
    fft: Arc<dyn Fft<f64>>,
}

impl EnfEstimator {
    pub fn new(meta: &VideoMeta, config: &StftConfig) -> Result<Self> {
        let fs = meta.fps();
        config.validate(fs)?;
        let win = (config.window_seconds * fs).round() as usize;
        let n = meta.frame_count;
        let t = enf_vector_len(meta, config);
        if win < 3 || n < win || t == 0 {
            return Err(Error::SeriesTooShort { len: n, window: win });
        }
        let starts = (0..t).map(|k| ((k as f64 * config.hop_seconds * fs).round() as usize).min(n - win)).collect();
        let window = match config.window_function {
            WindowFunction::Rect => vec![1.0; win],
            WindowFunction::Hann => (0..win)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos())
                .collect(),
        };
        let nfft = win * config.zero_pad_factor;
        let bin_width = fs / nfft as f64;
        let (lo_hz, hi_hz) = config.band();
        let lo = (lo_hz / bin_width).ceil().max(1.0) as usize;
        let hi = ((hi_hz / bin_width).floor() as usize).min(nfft / 2 - 1);
        if lo > hi {
            return Err(Error::EmptyBand { lo_hz, hi_hz });
        }
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Ok(EnfEstimator { config: *config, window, starts, nfft, bin_width, bins: (lo, hi), fft })
    }

    pub fn vector_len(&self) -> usize {
        self.starts.len()
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.bin_width
    }

    /// First and last spectral bin inside the search band.
    pub fn band_bins(&self) -> (usize, usize) {
        self.bins
    }

    pub fn hop_times(&self, fps: f64) -> Vec<f64> {
        self.starts.iter().map(|&s| s as f64 / fps).collect()
    }

    /// Magnitudes of bins `lo-1 ..= hi+1` for one window.
    fn band_magnitudes(&self, values: &[f64], start: usize, buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
        let seg = &values[start..start + self.window.len()];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        buf.clear();
        buf.extend(seg.iter().zip(&self.window).map(|(&v, &w)| Complex::new((v - mean) * w, 0.0)));
        buf.resize(self.nfft, Complex::new(0.0, 0.0));
        self.fft.process(buf);
        let (lo, hi) = self.bins;
        buf[lo - 1..=hi + 1].iter().map(|c| c.norm()).collect()
    }

    pub fn estimate(&self, series: &IntensitySeries) -> Result<EnfVector> {
        let need = self.starts.last().copied().unwrap_or(0) + self.window.len();
        if series.values.len() < need {
            return Err(Error::SeriesTooShort { len: series.values.len(), window: need });
        }
        let (lo, hi) = self.bins;
        let (band_lo, band_hi) = self.config.band();
        let mut buf = Vec::with_capacity(self.nfft);
        let values = self
            .starts
            .iter()
            .map(|&s| {
                let mags = self.band_magnitudes(&series.values, s, &mut buf);
                // mags[0] is bin lo-1
                let mut best = 1;
                for i in 2..=hi - lo + 1 {
                    if mags[i] > mags[best] {
                        best = i;
                    }
                }
                let bin = lo + best - 1;
                let f = quadratic_interp_peak(mags[best - 1], mags[best], mags[best + 1], bin, self.bin_width)
                    .unwrap_or(bin as f64 * self.bin_width);
                f.clamp(band_lo, band_hi)
            })
            .collect();
        Ok(EnfVector { values, region_label: series.region_label })
    }

    /// In-band magnitude spectrogram: one row per hop, bins `lo..=hi`.
    pub fn spectrogram(&self, series: &IntensitySeries) -> Vec<Vec<f32>> {
        let mut buf = Vec::with_capacity(self.nfft);
        self.starts
            .iter()
            .map(|&s| {
                let m = self.band_magnitudes(&series.values, s, &mut buf);
                m[1..m.len() - 1].iter().map(|&v| v as f32).collect()
            })
            .collect()
    }
}

pub fn stft_enf_estimate(series: &IntensitySeries, meta: &VideoMeta, config: &StftConfig) -> Result<EnfVector> {
    EnfEstimator::new(meta, config)?.estimate(series)
}
