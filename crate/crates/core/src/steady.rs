//! Steady pixels and steady superpixels.
//!
//! A pixel is steady when its luma trace only shows illumination changes.
//! Each trace is detrended by a centred moving average of `detrend_window`
//! frames and two statistics gate it:
//!
//! * jitter: the 95th percentile of absolute frame-to-frame differences of
//!   the detrended trace, which tolerates small flicker and sensor noise but
//!   not persistent fast changes;
//! * level shift: the largest change of the moving average itself over a lag
//!   of one window. Flicker averages out of it, while an object passing over
//!   the pixel, even briefly, moves it.
//!
//! Both must stay at or below `steadiness_threshold`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameSequence;
use crate::slic::SuperpixelMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyConfig {
    /// Moving-average span in frames, odd.
    pub detrend_window: usize,
    /// Luma units.
    pub steadiness_threshold: f32,
    /// A superpixel needs strictly more than `tau` steady pixels.
    pub tau: usize,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig { detrend_window: 31, steadiness_threshold: 0.04, tau: 900 }
    }
}

impl SteadyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.detrend_window == 0 || self.detrend_window % 2 == 0 {
            return Err(Error::config("steady.detrend_window must be odd and >= 1"));
        }
        if !(self.steadiness_threshold > 0.0) {
            return Err(Error::config("steady.steadiness_threshold must be > 0"));
        }
        if self.tau == 0 {
            return Err(Error::config("steady.tau must be >= 1"));
        }
        Ok(())
    }

    /// One second of frames, rounded to the nearest odd count at or above.
    pub fn window_for_fps(fps: f64) -> usize {
        let w = fps.round().max(1.0) as usize;
        w | 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteadyMask {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl SteadyMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }
}

/// The two per-pixel statistics compared against the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStats {
    pub jitter_p95: f32,
    pub level_shift: f32,
}

impl MotionStats {
    pub fn is_steady(&self, threshold: f32) -> bool {
        self.jitter_p95 <= threshold && self.level_shift <= threshold
    }
}

/// Centred moving average; windows are truncated at the ends.
fn moving_average(series: &[f32], window: usize, prefix: &mut Vec<f64>, out: &mut Vec<f64>) {
    let n = series.len();
    let half = window / 2;
    prefix.resize(n + 1, 0.0);
    prefix[0] = 0.0;
    let mut acc = 0.0f64;
    for (p, &v) in prefix[1..].iter_mut().zip(series) {
        acc += v as f64;
        *p = acc;
    }
    out.resize(n, 0.0);
    let edge = |i: usize| {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        (prefix[hi] - prefix[lo]) / (hi - lo) as f64
    };
    if n < window {
        for (i, o) in out.iter_mut().enumerate() {
            *o = edge(i);
        }
        return;
    }
    let inv = 1.0 / window as f64;
    for i in 0..half {
        out[i] = edge(i);
        out[n - 1 - i] = edge(n - 1 - i);
    }
    for (i, o) in out[half..n - half].iter_mut().enumerate() {
        *o = (prefix[i + window] - prefix[i]) * inv;
    }
}

pub fn motion_stats(series: &[f32], window: usize) -> MotionStats {
    motion_stats_with(series, window, &mut Scratch::default())
}

#[derive(Default)]
struct Scratch {
    prefix: Vec<f64>,
    ma: Vec<f64>,
    /// Bit patterns of non-negative f32 values, which sort like the values.
    diffs: Vec<u32>,
    histogram: Vec<u32>,
    bucket: Vec<u32>,
}

const BUCKET_SHIFT: u32 = 20;

/// `k`-th smallest (0-based) of `values`: a histogram over the high bits
/// finds the bucket holding it, then only that bucket is searched.
fn select_kth(values: &[u32], k: usize, histogram: &mut Vec<u32>, bucket: &mut Vec<u32>) -> u32 {
    histogram.clear();
    histogram.resize(1 << (32 - BUCKET_SHIFT), 0);
    for &v in values {
        histogram[(v >> BUCKET_SHIFT) as usize] += 1;
    }
    let mut seen = 0usize;
    let mut target = 0usize;
    for (b, &c) in histogram.iter().enumerate() {
        if seen + c as usize > k {
            target = b;
            break;
        }
        seen += c as usize;
    }
    bucket.clear();
    bucket.extend(values.iter().copied().filter(|&v| (v >> BUCKET_SHIFT) as usize == target));
    *bucket.select_nth_unstable(k - seen).1
}

fn motion_stats_with(series: &[f32], window: usize, scratch: &mut Scratch) -> MotionStats {
    let n = series.len();
    if n == 0 {
        return MotionStats { jitter_p95: 0.0, level_shift: 0.0 };
    }
    let Scratch { prefix, ma, diffs, histogram, bucket } = scratch;
    moving_average(series, window, prefix, ma);
    diffs.resize(n.saturating_sub(1), 0);
    let mut prev = series[0] as f64 - ma[0];
    for ((d, &v), &m) in diffs.iter_mut().zip(&series[1..]).zip(&ma[1..]) {
        let cur = v as f64 - m;
        *d = ((cur - prev).abs() as f32).to_bits();
        prev = cur;
    }
    let jitter_p95 = if diffs.is_empty() {
        0.0
    } else {
        let k = ((0.95 * diffs.len() as f64).ceil() as usize).clamp(1, diffs.len()) - 1;
        f32::from_bits(select_kth(diffs, k, histogram, bucket))
    };

    // only full windows take part in the level-shift statistic
    let half = window / 2;
    let mut level_shift = 0.0f64;
    if n >= window {
        let (first, last) = (half, n - 1 - half);
        if last >= first + window {
            for (a, b) in ma[first + window..=last].iter().zip(&ma[first..=last - window]) {
                level_shift = level_shift.max((a - b).abs());
            }
        } else {
            let full = &ma[first..=last];
            let hi = full.iter().copied().fold(f64::MIN, f64::max);
            let lo = full.iter().copied().fold(f64::MAX, f64::min);
            level_shift = hi - lo;
        }
    }
    MotionStats { jitter_p95, level_shift: level_shift as f32 }
}

/// Motion statistics for every pixel, row-major.
pub fn pixel_motion_stats(seq: &FrameSequence, config: &SteadyConfig) -> Result<Vec<MotionStats>> {
    config.validate()?;
    let meta = *seq.meta();
    if meta.frame_count < config.detrend_window {
        return Err(Error::SequenceTooShort { frames: meta.frame_count, needed: config.detrend_window });
    }
    let (w, n) = (meta.width, meta.frame_count);
    let rows: Vec<Vec<MotionStats>> = (0..meta.height)
        .into_par_iter()
        .map_init(
            || (vec![0.0f32; w], vec![0.0f32; w * n], Scratch::default()),
            |(row, series, scratch), y| {
                for f in 0..n {
                    seq.copy_span(f, y * w, row);
                    for (x, &v) in row.iter().enumerate() {
                        series[x * n + f] = v;
                    }
                }
                (0..w).map(|x| motion_stats_with(&series[x * n..(x + 1) * n], config.detrend_window, scratch)).collect()
            },
        )
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

pub fn compute_steady_mask(seq: &FrameSequence, config: &SteadyConfig) -> Result<SteadyMask> {
    let stats = pixel_motion_stats(seq, config)?;
    Ok(mask_from_stats(seq.meta().width, seq.meta().height, &stats, config.steadiness_threshold))
}

pub fn mask_from_stats(width: usize, height: usize, stats: &[MotionStats], threshold: f32) -> SteadyMask {
    SteadyMask { width, height, mask: stats.iter().map(|s| s.is_steady(threshold)).collect() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteadyRegion {
    pub label: u32,
    /// `(x, y)` of every steady pixel in the region, raster order.
    pub pixels: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SteadySuperpixelSet {
    pub regions: Vec<SteadyRegion>,
}

impl SteadySuperpixelSet {
    /// Number of steady superpixels.
    pub fn count(&self) -> usize {
        self.regions.len()
    }
}

/// Steady-pixel count per label.
pub fn steady_counts(map: &SuperpixelMap, mask: &SteadyMask) -> Vec<usize> {
    let mut counts = vec![0; map.region_count];
    for (&l, &m) in map.labels.iter().zip(&mask.mask) {
        if m {
            counts[l as usize] += 1;
        }
    }
    counts
}

/// Regions with strictly more than `tau` steady pixels, ordered by label.
pub fn select_steady_superpixels(map: &SuperpixelMap, mask: &SteadyMask, tau: usize) -> Result<SteadySuperpixelSet> {
    if (map.width, map.height) != (mask.width, mask.height) {
        return Err(Error::LengthMismatch(map.labels.len(), mask.mask.len()));
    }
    let counts = steady_counts(map, mask);
    let mut slot = vec![usize::MAX; map.region_count];
    let mut regions = Vec::new();
    for (l, &c) in counts.iter().enumerate() {
        if c > tau {
            slot[l] = regions.len();
            regions.push(SteadyRegion { label: l as u32, pixels: Vec::with_capacity(c) });
        }
    }
    for (i, (&l, &m)) in map.labels.iter().zip(&mask.mask).enumerate() {
        let s = slot[l as usize];
        if m && s != usize::MAX {
            regions[s].pixels.push(((i % map.width) as u32, (i / map.width) as u32));
        }
    }
    Ok(SteadySuperpixelSet { regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FrameRate, VideoMeta};

    fn seq_from_fn(w: usize, h: usize, n: usize, f: impl Fn(usize, usize, usize) -> f32) -> FrameSequence {
        let meta = VideoMeta { width: w, height: h, frame_rate: FrameRate::NTSC, frame_count: n, bit_depth: 32 };
        let mut data = Vec::with_capacity(w * h * n);
        for t in 0..n {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(t, x, y));
                }
            }
        }
        FrameSequence::from_f32(meta, data).unwrap()
    }

    #[test]
    fn bucket_select_matches_sorting() {
        let values: Vec<u32> = (0..5000u32).map(|i| ((i.wrapping_mul(2_654_435_761) % 1000) as f32 * 1e-4).to_bits()).collect();
        let mut sorted = values.clone();
        sorted.sort_unstable();
        let (mut h, mut b) = (Vec::new(), Vec::new());
        for k in [0, 1, 2500, 4749, 4999] {
            assert_eq!(select_kth(&values, k, &mut h, &mut b), sorted[k]);
        }
    }

    #[test]
    fn constant_video_is_all_steady() {
        let seq = seq_from_fn(6, 5, 100, |_, _, _| 0.4);
        let m = compute_steady_mask(&seq, &SteadyConfig::default()).unwrap();
        assert_eq!(m.count(), 30);
    }

    #[test]
    fn small_flicker_is_steady() {
        let fs = FrameRate::NTSC.hz();
        let seq = seq_from_fn(4, 4, 600, |t, _, _| 0.5 + 0.01 * (2.0 * std::f32::consts::PI * 10.09 * t as f32 / fs as f32).sin());
        let cfg = SteadyConfig { steadiness_threshold: 0.05, ..Default::default() };
        let m = compute_steady_mask(&seq, &cfg).unwrap();
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn brief_occlusion_is_not_steady() {
        let mut series = vec![0.5f32; 900];
        for v in &mut series[400..410] {
            *v = 0.9;
        }
        let s = motion_stats(&series, 31);
        assert!(s.jitter_p95 < 1e-6);
        assert!(s.level_shift > 0.1);
        assert!(!s.is_steady(0.04));
    }

    #[test]
    fn too_short_sequence() {
        let seq = seq_from_fn(2, 2, 10, |_, _, _| 0.1);
        assert!(matches!(compute_steady_mask(&seq, &SteadyConfig::default()), Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn detrend_window_for_ntsc() {
        assert_eq!(SteadyConfig::window_for_fps(29.97), 31);
        assert_eq!(SteadyConfig::window_for_fps(25.0), 25);
    }

    fn grid_map(w: usize, h: usize, cell: usize) -> SuperpixelMap {
        let cols = w / cell;
        let labels = (0..w * h).map(|i| ((i / w) / cell * cols + (i % w) / cell) as u32).collect();
        SuperpixelMap { width: w, height: h, labels, region_count: cols * (h / cell) }
    }

    #[test]
    fn selection_examples() {
        let map = grid_map(640, 480, 80);
        let all = SteadyMask { width: 640, height: 480, mask: vec![true; 640 * 480] };
        let set = select_steady_superpixels(&map, &all, 900).unwrap();
        assert_eq!(set.count(), 48);
        assert!(set.regions.iter().all(|r| r.pixels.len() == 6400));

        let none = SteadyMask { width: 640, height: 480, mask: vec![false; 640 * 480] };
        assert_eq!(select_steady_superpixels(&map, &none, 900).unwrap().count(), 0);

        // region 0 with exactly tau steady pixels is excluded
        let mut mask = vec![false; 640 * 480];
        let mut left = 900;
        for (i, m) in mask.iter_mut().enumerate() {
            if map.labels[i] == 0 && left > 0 {
                *m = true;
                left -= 1;
            }
        }
        let exact = SteadyMask { width: 640, height: 480, mask };
        assert_eq!(steady_counts(&map, &exact)[0], 900);
        assert_eq!(select_steady_superpixels(&map, &exact, 900).unwrap().count(), 0);
        assert_eq!(select_steady_superpixels(&map, &exact, 899).unwrap().count(), 1);
    }
}
