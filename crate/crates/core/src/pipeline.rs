//! The full detector: representative frame → superpixels → steady mask →
//! steady superpixels → intensity series → ENF tracks → consistency scores →
//! verdict.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::detect::{decide, decision_metrics, decision_metrics_leave_one_out, representative_enf};
use crate::detect::{DecisionMetrics, DetectionReport, EnfMatrix, MetricId, RepresentativeMode};
use crate::enf::{alias_frequency, region_series, EnfEstimator, StftConfig};
use crate::error::{Error, Result};
use crate::ingest::{representative_frame_index, FrameSequence, VideoMeta};
use crate::slic::{segment_slic, SlicConfig, SuperpixelMap};
use crate::steady::{compute_steady_mask, select_steady_superpixels, SteadyConfig, SteadyMask, SteadySuperpixelSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub nominal_grid_hz: f64,
    pub slic: SlicConfig,
    pub steady: SteadyConfig,
    /// Use one second of frames as the detrending window.
    pub auto_detrend_window: bool,
    pub stft: StftConfig,
    /// Centre the search band on the flicker alias at the clip's frame rate.
    pub auto_band_center: bool,
    pub representative_mode: RepresentativeMode,
    pub chosen_metric: MetricId,
    pub threshold: f64,
    pub leave_one_out: bool,
    /// Only the first `clip_seconds` of a clip are analysed.
    pub clip_seconds: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            nominal_grid_hz: 50.0,
            slic: SlicConfig::default(),
            steady: SteadyConfig::default(),
            auto_detrend_window: true,
            stft: StftConfig::default(),
            auto_band_center: true,
            representative_mode: RepresentativeMode::Median,
            chosen_metric: MetricId::F1,
            threshold: 0.8,
            leave_one_out: false,
            clip_seconds: 120.0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 19] = [
        "nominal_grid_hz",
        "clip_seconds",
        "slic.target_superpixels",
        "slic.compactness",
        "slic.max_iterations",
        "slic.connectivity_min_fraction",
        "steady.detrend_window",
        "steady.steadiness_threshold",
        "steady.tau",
        "stft.window_seconds",
        "stft.hop_seconds",
        "stft.window_function",
        "stft.zero_pad_factor",
        "stft.band_center_hz",
        "stft.band_halfwidth_hz",
        "detect.representative_mode",
        "detect.chosen_metric",
        "detect.threshold",
        "detect.leave_one_out",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_grid_hz > 0.0) {
            return Err(Error::config("nominal_grid_hz must be > 0"));
        }
        self.slic.validate()?;
        if !self.auto_detrend_window {
            self.steady.validate()?;
        }
        if !(self.clip_seconds >= self.stft.window_seconds) {
            return Err(Error::config("clip_seconds must be >= stft.window_seconds"));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("detect.threshold must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Sets one dotted key. `auto` is accepted for the detrend window and
    /// the band centre.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "nominal_grid_hz" => self.nominal_grid_hz = parse_value(key, v)?,
            "clip_seconds" => self.clip_seconds = parse_value(key, v)?,
            "slic.target_superpixels" => self.slic.target_superpixels = parse_value(key, v)?,
            "slic.compactness" => self.slic.compactness = parse_value(key, v)?,
            "slic.max_iterations" => self.slic.max_iterations = parse_value(key, v)?,
            "slic.connectivity_min_fraction" => self.slic.connectivity_min_fraction = parse_value(key, v)?,
            "steady.detrend_window" if v == "auto" => self.auto_detrend_window = true,
            "steady.detrend_window" => {
                self.steady.detrend_window = parse_value(key, v)?;
                self.auto_detrend_window = false;
            }
            "steady.steadiness_threshold" => self.steady.steadiness_threshold = parse_value(key, v)?,
            "steady.tau" => self.steady.tau = parse_value(key, v)?,
            "stft.window_seconds" => self.stft.window_seconds = parse_value(key, v)?,
            "stft.hop_seconds" => self.stft.hop_seconds = parse_value(key, v)?,
            "stft.window_function" => self.stft.window_function = v.parse()?,
            "stft.zero_pad_factor" => self.stft.zero_pad_factor = parse_value(key, v)?,
            "stft.band_center_hz" if v == "auto" => self.auto_band_center = true,
            "stft.band_center_hz" => {
                self.stft.band_center_hz = parse_value(key, v)?;
                self.auto_band_center = false;
            }
            "stft.band_halfwidth_hz" => self.stft.band_halfwidth_hz = parse_value(key, v)?,
            "detect.representative_mode" => self.representative_mode = v.parse()?,
            "detect.chosen_metric" => self.chosen_metric = v.parse()?,
            "detect.threshold" => self.threshold = parse_value(key, v)?,
            "detect.leave_one_out" => self.leave_one_out = parse_value(key, v)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "nominal_grid_hz" => self.nominal_grid_hz.to_string(),
            "clip_seconds" => self.clip_seconds.to_string(),
            "slic.target_superpixels" => self.slic.target_superpixels.to_string(),
            "slic.compactness" => self.slic.compactness.to_string(),
            "slic.max_iterations" => self.slic.max_iterations.to_string(),
            "slic.connectivity_min_fraction" => self.slic.connectivity_min_fraction.to_string(),
            "steady.detrend_window" if self.auto_detrend_window => "auto".into(),
            "steady.detrend_window" => self.steady.detrend_window.to_string(),
            "steady.steadiness_threshold" => self.steady.steadiness_threshold.to_string(),
            "steady.tau" => self.steady.tau.to_string(),
            "stft.window_seconds" => self.stft.window_seconds.to_string(),
            "stft.hop_seconds" => self.stft.hop_seconds.to_string(),
            "stft.window_function" => self.stft.window_function.to_string(),
            "stft.zero_pad_factor" => self.stft.zero_pad_factor.to_string(),
            "stft.band_center_hz" if self.auto_band_center => "auto".into(),
            "stft.band_center_hz" => self.stft.band_center_hz.to_string(),
            "stft.band_halfwidth_hz" => self.stft.band_halfwidth_hz.to_string(),
            "detect.representative_mode" => self.representative_mode.to_string(),
            "detect.chosen_metric" => self.chosen_metric.to_string(),
            "detect.threshold" => self.threshold.to_string(),
            "detect.leave_one_out" => self.leave_one_out.to_string(),
            _ => return None,
        })
    }

    /// Parses `key=value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("line {}: expected key=value", no + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key, one `key=value` per line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).expect("known key"));
        }
        out
    }

    /// Steady and STFT settings with the `auto` values filled in for `meta`.
    pub fn resolve(&self, meta: &VideoMeta) -> Result<(SteadyConfig, StftConfig)> {
        self.validate()?;
        let mut steady = self.steady;
        if self.auto_detrend_window {
            steady.detrend_window = SteadyConfig::window_for_fps(meta.fps());
        }
        steady.validate()?;
        let mut stft = self.stft;
        if self.auto_band_center {
            stft.band_center_hz = alias_frequency(2.0 * self.nominal_grid_hz, meta.fps())?;
        }
        stft.validate(meta.fps())?;
        Ok((steady, stft))
    }

    pub fn clip_frames(&self, meta: &VideoMeta) -> usize {
        VideoMeta::frames_for_seconds(meta.frame_rate, self.clip_seconds)
    }
}

/// Intermediate products of one detector run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub map: SuperpixelMap,
    pub mask: SteadyMask,
    pub steady: SteadySuperpixelSet,
    pub matrix: EnfMatrix,
    /// ENF track length.
    pub t: usize,
}

impl Analysis {
    pub fn labels(&self) -> Vec<u32> {
        self.steady.regions.iter().map(|r| r.label).collect()
    }

    /// Scores for one representative mode; `None` when they cannot be
    /// formed (fewer than two tracks, or every correlation undefined).
    pub fn metrics(&self, mode: RepresentativeMode, leave_one_out: bool) -> Result<Option<DecisionMetrics>> {
        let result = if self.matrix.row_count() == 0 {
            Err(Error::TooFewRows(0))
        } else if leave_one_out {
            decision_metrics_leave_one_out(&self.matrix, mode)
        } else {
            decision_metrics(&self.matrix, &representative_enf(&self.matrix, mode)?)
        };
        match result {
            Ok(m) => Ok(Some(m)),
            Err(Error::TooFewRows(_) | Error::AllDegenerate) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn report(&self, cfg: &PipelineConfig) -> Result<DetectionReport> {
        let metrics = self.metrics(cfg.representative_mode, cfg.leave_one_out)?;
        Ok(decide(
            metrics.as_ref(),
            cfg.chosen_metric,
            cfg.threshold,
            self.steady.count(),
            cfg.representative_mode,
            self.t,
            &self.labels(),
        ))
    }
}

/// Drops frames beyond `clip_seconds`, cloning only when needed.
fn clipped<'a>(seq: &'a FrameSequence, cfg: &PipelineConfig) -> std::borrow::Cow<'a, FrameSequence> {
    let keep = cfg.clip_frames(seq.meta());
    if keep > 0 && keep < seq.len() {
        let mut s = seq.clone();
        s.truncate(keep);
        std::borrow::Cow::Owned(s)
    } else {
        std::borrow::Cow::Borrowed(seq)
    }
}

/// Superpixels of the middle frame.
pub fn segment(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<SuperpixelMap> {
    let seq = clipped(seq, cfg);
    let frame = seq.frame(representative_frame_index(seq.len())?);
    segment_slic(&frame, &cfg.slic)
}

pub fn steady_mask(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<SteadyMask> {
    let seq = clipped(seq, cfg);
    let (steady, _) = cfg.resolve(seq.meta())?;
    compute_steady_mask(&seq, &steady)
}

/// Runs everything up to the ENF matrix.
pub fn analyze(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<Analysis> {
    let seq = clipped(seq, cfg);
    let map = segment(&seq, cfg)?;
    let mask = steady_mask(&seq, cfg)?;
    analyze_regions(&seq, cfg, map, mask)
}

/// Runs the steps after segmentation and masking with the given map and mask.
pub fn analyze_regions(seq: &FrameSequence, cfg: &PipelineConfig, map: SuperpixelMap, mask: SteadyMask) -> Result<Analysis> {
    let seq = clipped(seq, cfg);
    let meta = *seq.meta();
    let (steady_cfg, stft) = cfg.resolve(&meta)?;
    let estimator = EnfEstimator::new(&meta, &stft)?;
    let steady = select_steady_superpixels(&map, &mask, steady_cfg.tau)?;
    let series = region_series(&seq, &steady)?;
    let rows = series.par_iter().map(|s| estimator.estimate(s)).collect::<Result<Vec<_>>>()?;
    let matrix = EnfMatrix::new(rows)?;
    Ok(Analysis { map, mask, steady, matrix, t: estimator.vector_len() })
}

pub fn detect(seq: &FrameSequence, cfg: &PipelineConfig) -> Result<DetectionReport> {
    analyze(seq, cfg)?.report(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_kv_string();
        assert!(text.contains("stft.window_seconds=20\n"));
        assert!(text.contains("stft.band_center_hz=auto\n"));
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(PipelineConfig::parse("nope=1").is_err());
        assert!(PipelineConfig::parse("stft.window_seconds").is_err());
        assert!(PipelineConfig::parse("detect.threshold=abc").is_err());
        assert!(PipelineConfig::parse("clip_seconds=10").is_err());
        assert!(PipelineConfig::parse("# comment\n\ndetect.threshold=0.5").is_ok());
    }

    #[test]
    fn resolve_fills_in_auto_values() {
        let meta = VideoMeta { width: 4, height: 4, frame_rate: crate::FrameRate::NTSC, frame_count: 10, bit_depth: 8 };
        let (steady, stft) = PipelineConfig::default().resolve(&meta).unwrap();
        assert_eq!(steady.detrend_window, 31);
        assert!((stft.band_center_hz - 10.0899).abs() < 1e-3);
        // 60 Hz mains at 29.97 fps folds to 0.12 Hz: the band would reach below zero
        let us = PipelineConfig { nominal_grid_hz: 60.0, ..Default::default() };
        assert!(matches!(us.resolve(&meta), Err(Error::InvalidConfig(_))));
    }

    proptest! {
        #[test]
        fn config_round_trips(
            grid in prop::sample::select(vec![50.0, 60.0]),
            p in 1usize..500,
            m in 0.001f32..1.0,
            win in prop::option::of((0usize..50).prop_map(|k| 2 * k + 1)),
            thr in 0.001f32..0.5,
            tau in 1usize..5000,
            ws in 2.0f64..60.0,
            centre in prop::option::of(1.0f64..14.0),
            mode in prop::sample::select(RepresentativeMode::ALL.to_vec()),
            metric in prop::sample::select(MetricId::ALL.to_vec()),
            threshold in -1.0f64..=1.0,
            loo in any::<bool>(),
        ) {
            let mut cfg = PipelineConfig { nominal_grid_hz: grid, representative_mode: mode, chosen_metric: metric, threshold, leave_one_out: loo, ..Default::default() };
            cfg.slic.target_superpixels = p;
            cfg.slic.compactness = m;
            cfg.steady.steadiness_threshold = thr;
            cfg.steady.tau = tau;
            if let Some(w) = win { cfg.steady.detrend_window = w; cfg.auto_detrend_window = false; }
            cfg.stft.window_seconds = ws;
            cfg.clip_seconds = ws + 60.0;
            if let Some(c) = centre { cfg.stft.band_center_hz = c; cfg.auto_band_center = false; }
            let back = PipelineConfig::parse(&cfg.to_kv_string()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
