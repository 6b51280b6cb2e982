use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::grid::{synthesize_enf_trace, EnfTrace, GridModel};
use super::scene::{SceneModel, ShutterModel};
use super::{ClipLabel, GroundTruth};
use crate::enf::alias_frequency;
use crate::error::Result;
use crate::ingest::{FrameSequence, VideoMeta};

const EXPOSURE_POINTS: usize = 16;
/// Keeps the noise streams apart from the trace stream of the same seed.
const NOISE_SEED_SALT: u64 = 0x6e6f_6973_655f_7631;
/// Sensor noise is drawn uniformly from this many Gaussian samples.
const NOISE_TABLE_LEN: usize = 1 << 16;

/// Mean of `|V|` over `[start, start + exposure]` by a 16-point midpoint
/// rule; a zero exposure samples `|V(start)|`.
pub fn exposure_average(trace: &EnfTrace, grid: &GridModel, start: f64, exposure: f64) -> f64 {
    let amp = std::f64::consts::SQRT_2 * grid.v_effective;
    let v = |t: f64| (amp * trace.phase(t, grid.initial_phase).cos()).abs();
    if exposure <= 0.0 {
        return v(start);
    }
    let h = exposure / EXPOSURE_POINTS as f64;
    (0..EXPOSURE_POINTS).map(|k| v(start + (k as f64 + 0.5) * h)).sum::<f64>() / EXPOSURE_POINTS as f64
}

/// Renders a clip. Luma per pixel is
/// `r * (a * mean|V| + (1 - a) * beta / d^2 * J) * drift`, where `J` is the
/// exposure average of `|V|` for the pixel's row (or `mean|V|` for clips
/// without mains light), then objects are composited, noise is added and the
/// result is clipped and quantized to `meta.bit_depth`.
pub fn render_video(
    scene: &SceneModel,
    shutter: &ShutterModel,
    grid: &GridModel,
    meta: &VideoMeta,
    label: ClipLabel,
    seed: u64,
) -> Result<(FrameSequence, GroundTruth)> {
    meta.validate()?;
    shutter.validate(meta)?;
    scene.validate(meta)?;
    let fps = meta.fps();
    let (w, h) = (meta.width, meta.height);
    let px = w * h;
    let duration = meta.frame_count as f64 / fps + 2.0 / fps;
    let trace = synthesize_enf_trace(grid, duration, seed)?;
    let mean_v = grid.mean_abs_voltage();

    // Static per-pixel terms: luma = base + gain * J.
    let a = scene.ambient_fraction as f64;
    let mut base = vec![0.0f64; px];
    let mut gain = vec![0.0f64; px];
    for i in 0..px {
        let r = scene.reflectance[i] as f64;
        let direct = (1.0 - a) * scene.beta as f64 / (scene.distance[i] as f64).powi(2);
        let mw = scene.mains_weight.as_ref().map_or(1.0, |m| m[i] as f64);
        base[i] = r * (a * mean_v + direct * (1.0 - mw) * mean_v);
        gain[i] = r * direct * mw;
    }

    // Per-pixel Gaussian draws dominate the cost of rendering, so they come
    // from a table of exact draws indexed by 16-bit uniforms.
    let noise: Option<Vec<f32>> = (scene.sensor_noise_std > 0.0).then(|| {
        let dist = Normal::new(0.0f32, scene.sensor_noise_std).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SEED_SALT);
        (0..NOISE_TABLE_LEN).map(|_| dist.sample(&mut rng)).collect()
    });
    let uniform_rows = shutter.kind == super::ShutterKind::Global || shutter.row_read_time == 0.0;
    let render_frame = |n: usize, out: &mut [f32]| {
        let j: Vec<f64> = match label {
            ClipLabel::EnfAbsent => vec![mean_v; h],
            ClipLabel::EnfPresent if uniform_rows => vec![exposure_average(&trace, grid, shutter.row_start(n, 0, fps), shutter.exposure_time); h],
            ClipLabel::EnfPresent => {
                (0..h).map(|row| exposure_average(&trace, grid, shutter.row_start(n, row, fps), shutter.exposure_time)).collect()
            }
        };
        let drift = scene.drift.map_or(1.0, |d| {
            1.0 + d.amplitude as f64 * (std::f64::consts::TAU * d.frequency_hz as f64 * n as f64 / fps + d.phase as f64).sin()
        });
        for (y, row) in out.chunks_mut(w).enumerate() {
            let (jy, start) = (j[y], y * w);
            for ((o, &b), &g) in row.iter_mut().zip(&base[start..start + w]).zip(&gain[start..start + w]) {
                *o = ((b + g * jy) * drift) as f32;
            }
        }
        for obj in &scene.moving_objects {
            if let Some((x0, y0, x1, y1)) = obj.bbox(n, w, h) {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        if obj.covers(n, x, y) {
                            out[y * w + x] = obj.luma;
                        }
                    }
                }
            }
        }
        if let Some(table) = &noise {
            let mut rng = SmallRng::seed_from_u64((seed ^ NOISE_SEED_SALT).wrapping_add((n as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            for chunk in out.chunks_mut(4) {
                let bits: u64 = rng.random();
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v += table[(bits >> (16 * k)) as usize & (NOISE_TABLE_LEN - 1)];
                }
            }
        }
    };

    let total = px * meta.frame_count;
    let seq = match meta.bit_depth {
        32 => {
            let mut data = vec![0.0f32; total];
            data.par_chunks_mut(px).enumerate().for_each(|(n, chunk)| {
                render_frame(n, chunk);
                chunk.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            });
            FrameSequence::from_f32(*meta, data)?
        }
        d => {
            let max = ((1u32 << d) - 1) as f32;
            if d <= 8 {
                let mut data = vec![0u8; total];
                data.par_chunks_mut(px).enumerate().for_each_init(
                    || vec![0.0f32; px],
                    |buf, (n, chunk)| {
                        render_frame(n, buf);
                        chunk.iter_mut().zip(buf.iter()).for_each(|(c, &v)| *c = (v.clamp(0.0, 1.0) * max + 0.5) as u8);
                    },
                );
                FrameSequence::from_u8(*meta, data)?
            } else {
                let mut data = vec![0u16; total];
                data.par_chunks_mut(px).enumerate().for_each_init(
                    || vec![0.0f32; px],
                    |buf, (n, chunk)| {
                        render_frame(n, buf);
                        chunk.iter_mut().zip(buf.iter()).for_each(|(c, &v)| *c = (v.clamp(0.0, 1.0) * max + 0.5) as u16);
                    },
                );
                FrameSequence::from_u16(*meta, data)?
            }
        }
    };
    let truth = GroundTruth { enf_trace: trace, flicker_alias_hz: alias_frequency(2.0 * grid.f_nominal, fps)?, label };
    Ok((seq, truth))
}
