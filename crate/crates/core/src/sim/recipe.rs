use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridModel, TRACE_RATE_HZ};
use super::render::render_video;
use super::scene::{BouncePath, IlluminationDrift, MovingObject, SceneModel, Shape, ShutterKind, ShutterModel};
use super::{ClipLabel, GroundTruth};
use crate::error::{Error, Result};
use crate::ingest::{write_pgm_sequence, write_raw_planar, write_y4m, FrameRate, FrameSequence, InputFormat, VideoMeta};

const SCENE_SALT: u64 = 0x7363_656e_655f_7631;

/// Randomized scene generator used for corpora: a patchwork of matte
/// surfaces lit by one point lamp plus ambient light, with objects moving in
/// a band at the bottom of the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecipe {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub seconds: f64,
    pub bit_depth: u8,
    pub label: ClipLabel,
    pub shutter: ShutterKind,
    pub noise_std: f32,
    /// Share of image rows (from the bottom) that moving objects may enter.
    pub motion_rows_fraction: f32,
    pub object_count: usize,
    /// Share of columns (from the right) lit only by a steady source.
    pub unlit_fraction: f32,
    /// Target luma amplitude of the flicker fundamental at the frame centre.
    pub flicker_amplitude: f32,
    /// Upper bound on the relative amplitude of slow illumination drift.
    pub drift_amplitude: f32,
    pub grid: GridModel,
    pub seed: u64,
}

impl Default for ClipRecipe {
    fn default() -> Self {
        ClipRecipe {
            width: 160,
            height: 120,
            frame_rate: FrameRate::NTSC,
            seconds: 120.0,
            bit_depth: 8,
            label: ClipLabel::EnfPresent,
            shutter: ShutterKind::Global,
            noise_std: 0.01,
            motion_rows_fraction: 0.3,
            object_count: 3,
            unlit_fraction: 0.0,
            flicker_amplitude: 0.006,
            drift_amplitude: 0.02,
            grid: GridModel::default(),
            seed: 0,
        }
    }
}

impl ClipRecipe {
    pub fn meta(&self) -> VideoMeta {
        VideoMeta {
            width: self.width,
            height: self.height,
            frame_rate: self.frame_rate,
            frame_count: VideoMeta::frames_for_seconds(self.frame_rate, self.seconds),
            bit_depth: self.bit_depth,
        }
    }

    /// Draws the scene and shutter for this recipe's seed.
    pub fn build(&self) -> Result<(SceneModel, ShutterModel)> {
        let meta = self.meta();
        meta.validate()?;
        if !(0.0..=1.0).contains(&self.motion_rows_fraction) || !(0.0..=1.0).contains(&self.unlit_fraction) {
            return Err(Error::config("motion_rows_fraction and unlit_fraction must lie in [0, 1]"));
        }
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ SCENE_SALT);

        // Voronoi patchwork of surfaces.
        let sites: Vec<(f32, f32, f32)> = (0..20)
            .map(|_| (rng.random_range(0.0..w as f32), rng.random_range(0.0..h as f32), rng.random_range(0.3..0.85)))
            .collect();
        let mut reflectance = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f32, y as f32);
                let near = sites
                    .iter()
                    .min_by(|a, b| ((a.0 - fx).powi(2) + (a.1 - fy).powi(2)).total_cmp(&((b.0 - fx).powi(2) + (b.1 - fy).powi(2))))
                    .expect("sites");
                reflectance[y * w + x] = near.2;
            }
        }

        // Point lamp above the scene; distances are relative to its height.
        let (lx, ly) = (rng.random_range(0.0..w as f32), rng.random_range(0.0..h as f32 * 0.7));
        let z = 0.8 * w.max(h) as f32;
        let distance: Vec<f32> = (0..w * h)
            .map(|i| {
                let (dx, dy) = ((i % w) as f32 - lx, (i / w) as f32 - ly);
                (dx * dx + dy * dy + z * z).sqrt() / z
            })
            .collect();

        let exposure = rng.random_range(1.0 / 500.0..1.0 / 120.0);
        let shutter = match self.shutter {
            ShutterKind::Global => ShutterModel::global(exposure),
            ShutterKind::Rolling => ShutterModel::rolling(&meta, rng.random_range(0.3..0.9), exposure),
        };

        // Choose the flickering share so the fundamental has the target size.
        let x = 2.0 * self.grid.f_nominal * exposure;
        let sinc = if x == 0.0 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
        let fundamental = std::f64::consts::SQRT_2 * self.grid.v_effective * 4.0 / (3.0 * std::f64::consts::PI) * sinc.abs();
        let mean_r = reflectance.iter().map(|&r| r as f64).sum::<f64>() / reflectance.len() as f64;
        let direct = (self.flicker_amplitude as f64 / (mean_r * fundamental)).min(0.99);

        let band_top = h as f32 * (1.0 - self.motion_rows_fraction);
        let mut moving_objects = Vec::new();
        if self.motion_rows_fraction > 0.0 {
            for _ in 0..self.object_count {
                let size = rng.random_range(6.0f32..16.0).min(h as f32 - band_top).max(1.0);
                let half = size / 2.0;
                let shape = if rng.random_bool(0.5) { Shape::Rect { width: size * 1.5, height: size } } else { Shape::Disk { radius: half } };
                let hx = match shape {
                    Shape::Rect { width, .. } => width / 2.0,
                    Shape::Disk { radius } => radius,
                };
                let cy = rng.random_range(band_top + half..=(h as f32 - half).max(band_top + half));
                let (x0, x1) = (hx, w as f32 - hx);
                let from_left = rng.random_bool(0.5);
                moving_objects.push(MovingObject {
                    shape,
                    path: BouncePath {
                        from: (if from_left { x0 } else { x1 }, cy),
                        to: (if from_left { x1 } else { x0 }, cy),
                        period_frames: rng.random_range(60.0..240.0),
                    },
                    luma: rng.random_range(0.05..0.95),
                });
            }
        }

        let drift = (self.drift_amplitude > 0.0).then(|| IlluminationDrift {
            amplitude: rng.random_range(0.0..self.drift_amplitude),
            frequency_hz: rng.random_range(0.02..0.2),
            phase: rng.random_range(0.0..std::f32::consts::TAU),
        });

        let mains_weight = (self.unlit_fraction > 0.0).then(|| {
            let edge = w as f32 * (1.0 - self.unlit_fraction);
            (0..w * h).map(|i| if ((i % w) as f32) < edge { 1.0 } else { 0.0 }).collect()
        });

        let scene = SceneModel {
            width: w,
            height: h,
            reflectance,
            distance,
            beta: 1.0,
            ambient_fraction: (1.0 - direct) as f32,
            mains_weight,
            moving_objects,
            sensor_noise_std: self.noise_std,
            drift,
        };
        Ok((scene, shutter))
    }

    pub fn render(&self) -> Result<(FrameSequence, GroundTruth)> {
        let (scene, shutter) = self.build()?;
        render_video(&scene, &shutter, &self.grid, &self.meta(), self.label, self.seed)
    }
}

/// JSON written next to every simulated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSidecar {
    pub label: ClipLabel,
    pub f_nominal: f64,
    pub alias_hz: f64,
    /// CSV of `t_s,f_hz` at the trace rate, relative to the sidecar.
    pub enf_trace_file: String,
    pub seed: u64,
    pub shutter: ShutterModel,
}

/// Writes `<dir>/<stem>.y4m` (or a PGM directory / raw file), the trace CSV
/// and `<stem>.truth.json`. Returns the clip path.
pub fn write_clip(
    seq: &FrameSequence,
    truth: &GroundTruth,
    shutter: &ShutterModel,
    seed: u64,
    dir: &Path,
    stem: &str,
    format: InputFormat,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let clip = match format {
        InputFormat::Y4m => {
            let p = dir.join(format!("{stem}.y4m"));
            write_y4m(seq, &p)?;
            p
        }
        InputFormat::PgmSequence => {
            let p = dir.join(stem);
            write_pgm_sequence(seq, &p)?;
            p
        }
        InputFormat::RawPlanar => {
            let p = dir.join(format!("{stem}.raw"));
            write_raw_planar(seq, &p)?;
            p
        }
    };
    let trace_name = format!("{stem}.enf.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(&trace_name))?);
    writeln!(out, "t_s,f_hz")?;
    for (i, f) in truth.enf_trace.frequency_hz().enumerate() {
        writeln!(out, "{:.3},{f:.6}", i as f64 / TRACE_RATE_HZ)?;
    }
    out.flush()?;
    let sidecar = GroundTruthSidecar {
        label: truth.label,
        f_nominal: truth.enf_trace.f_nominal,
        alias_hz: truth.flicker_alias_hz,
        enf_trace_file: trace_name,
        seed,
        shutter: *shutter,
    };
    std::fs::write(dir.join(format!("{stem}.truth.json")), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(clip)
}
