use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::VideoMeta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Rect { width: f32, height: f32 },
    Disk { radius: f32 },
}

/// Back-and-forth motion between two centre positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BouncePath {
    pub from: (f32, f32),
    pub to: (f32, f32),
    /// Frames for a full there-and-back cycle.
    pub period_frames: f32,
}

impl BouncePath {
    pub fn position(&self, frame: usize) -> (f32, f32) {
        let u = (frame as f32 / self.period_frames).fract();
        let s = if u < 0.5 { 2.0 * u } else { 2.0 - 2.0 * u };
        (self.from.0 + s * (self.to.0 - self.from.0), self.from.1 + s * (self.to.1 - self.from.1))
    }
}

/// An opaque, matte object with constant luma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingObject {
    pub shape: Shape,
    pub path: BouncePath,
    pub luma: f32,
}

impl MovingObject {
    pub fn covers(&self, frame: usize, x: usize, y: usize) -> bool {
        let (cx, cy) = self.path.position(frame);
        let (dx, dy) = (x as f32 - cx, y as f32 - cy);
        match self.shape {
            Shape::Rect { width, height } => dx.abs() < width / 2.0 && dy.abs() < height / 2.0,
            Shape::Disk { radius } => dx * dx + dy * dy < radius * radius,
        }
    }

    /// Bounding box `(x0, y0, x1, y1)` inclusive, clipped to the frame.
    pub(crate) fn bbox(&self, frame: usize, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let (cx, cy) = self.path.position(frame);
        let (hw, hh) = match self.shape {
            Shape::Rect { width, height } => (width / 2.0, height / 2.0),
            Shape::Disk { radius } => (radius, radius),
        };
        let x0 = (cx - hw).floor().max(0.0) as usize;
        let y0 = (cy - hh).floor().max(0.0) as usize;
        let x1 = (cx + hw).ceil().min(width as f32 - 1.0);
        let y1 = (cy + hh).ceil().min(height as f32 - 1.0);
        if x1 < 0.0 || y1 < 0.0 || x0 >= width || y0 >= height {
            return None;
        }
        Some((x0, y0, x1 as usize, y1 as usize))
    }
}

/// Slow multiplicative change of the overall illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationDrift {
    /// Relative amplitude.
    pub amplitude: f32,
    pub frequency_hz: f32,
    pub phase: f32,
}

/// Static scene: per-pixel reflectance and distance to a point light, plus
/// ambient light, motion content and sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub width: usize,
    pub height: usize,
    /// `r(x, y)` in [0, 1].
    pub reflectance: Vec<f32>,
    /// `d_s(x, y)` to the mains-powered light, > 0.
    pub distance: Vec<f32>,
    /// Voltage-to-luminance factor.
    pub beta: f32,
    /// Share of light that does not flicker.
    pub ambient_fraction: f32,
    /// Per-pixel share of the direct light that comes from the mains source;
    /// the rest comes from a steady source of equal mean power. `None` means 1.
    pub mains_weight: Option<Vec<f32>>,
    pub moving_objects: Vec<MovingObject>,
    pub sensor_noise_std: f32,
    pub drift: Option<IlluminationDrift>,
}

impl SceneModel {
    /// Uniform reflectance and distance, no motion, no noise.
    pub fn uniform(width: usize, height: usize, reflectance: f32, distance: f32) -> Self {
        SceneModel {
            width,
            height,
            reflectance: vec![reflectance; width * height],
            distance: vec![distance; width * height],
            beta: 1.0,
            ambient_fraction: 0.95,
            mains_weight: None,
            moving_objects: Vec::new(),
            sensor_noise_std: 0.0,
            drift: None,
        }
    }

    pub fn validate(&self, meta: &VideoMeta) -> Result<()> {
        let n = self.width * self.height;
        if (self.width, self.height) != (meta.width, meta.height) {
            return Err(Error::config("scene size differs from the video size"));
        }
        if self.reflectance.len() != n || self.distance.len() != n || self.mains_weight.as_ref().is_some_and(|w| w.len() != n) {
            return Err(Error::config("scene maps have the wrong size"));
        }
        if self.reflectance.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("reflectance must lie in [0, 1]"));
        }
        if self.distance.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::config("distance must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ambient_fraction) || !(self.beta >= 0.0) || !(self.sensor_noise_std >= 0.0) {
            return Err(Error::config("ambient_fraction in [0,1], beta >= 0 and noise >= 0 required"));
        }
        Ok(())
    }

    /// Pixels covered by any moving object in any of the first `frames` frames.
    pub fn motion_occupancy(&self, frames: usize) -> Vec<bool> {
        let mut occ = vec![false; self.width * self.height];
        for obj in &self.moving_objects {
            for n in 0..frames {
                if let Some((x0, y0, x1, y1)) = obj.bbox(n, self.width, self.height) {
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            if obj.covers(n, x, y) {
                                occ[y * self.width + x] = true;
                            }
                        }
                    }
                }
            }
        }
        occ
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShutterKind {
    Global,
    Rolling,
}

impl std::fmt::Display for ShutterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShutterKind::Global => "global",
            ShutterKind::Rolling => "rolling",
        })
    }
}

impl std::str::FromStr for ShutterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" | "ccd" => Ok(ShutterKind::Global),
            "rolling" | "cmos" => Ok(ShutterKind::Rolling),
            other => Err(Error::config(format!("unknown shutter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShutterModel {
    pub kind: ShutterKind,
    /// Seconds between the exposure starts of consecutive rows (rolling only).
    pub row_read_time: f64,
    /// Seconds; 0 samples instantaneously.
    pub exposure_time: f64,
}

impl ShutterModel {
    pub fn global(exposure_time: f64) -> Self {
        ShutterModel { kind: ShutterKind::Global, row_read_time: 0.0, exposure_time }
    }

    /// Rolling shutter whose readout spans `readout_fraction` of a frame period.
    pub fn rolling(meta: &VideoMeta, readout_fraction: f64, exposure_time: f64) -> Self {
        ShutterModel {
            kind: ShutterKind::Rolling,
            row_read_time: readout_fraction / (meta.fps() * meta.height as f64),
            exposure_time,
        }
    }

    pub fn validate(&self, meta: &VideoMeta) -> Result<()> {
        let period = 1.0 / meta.fps();
        if !(self.exposure_time >= 0.0 && self.exposure_time <= period) {
            return Err(Error::InvalidShutter(format!("exposure {} s outside [0, {period}]", self.exposure_time)));
        }
        if self.kind == ShutterKind::Rolling && !(self.row_read_time >= 0.0 && self.row_read_time * meta.height as f64 <= period) {
            return Err(Error::InvalidShutter(format!("readout {} s/row exceeds the frame period", self.row_read_time)));
        }
        Ok(())
    }

    /// Exposure start of `row` in frame `n`.
    pub fn row_start(&self, n: usize, row: usize, fps: f64) -> f64 {
        let t = n as f64 / fps;
        match self.kind {
            ShutterKind::Global => t,
            ShutterKind::Rolling => t + row as f64 * self.row_read_time,
        }
    }
}
