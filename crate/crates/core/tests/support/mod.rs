//! Property suites shared by the `properties` and `acceptance` targets. Each
//! suite runs a fixed number of cases from a deterministic generator.

use enfpd_core::detect::pearson;
use enfpd_core::enf::{region_series, EnfEstimator};
use enfpd_core::sim::{ClipLabel, ClipRecipe, ShutterKind};
use enfpd_core::slic::segment_slic;
use enfpd_core::steady::{compute_steady_mask, select_steady_superpixels};
use enfpd_core::{Frame, FrameRate, FrameSequence, IntensitySeries, SlicConfig, SteadyConfig, StftConfig, VideoMeta};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Suite = (&'static str, fn() -> Result<(), String>);

/// The invariant suites, by name.
pub const SUITES: &[Suite] = &[
    ("slic partition", slic_partition),
    ("slic determinism", slic_determinism),
    ("slic label permutation", slic_label_permutation),
    ("pearson affine invariance", pearson_affine_invariance),
    ("enf amplitude and offset invariance", enf_amplitude_offset_invariance),
    ("steady mask monotonicity", steady_monotonicity),
    ("simulator determinism", simulator_determinism),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Piecewise-smooth test frame: a few flat patches plus a gentle gradient.
pub fn frame_strategy(max_side: usize) -> impl Strategy<Value = Frame> {
    (4..=max_side, 4..=max_side, prop::collection::vec((0.0f32..1.0, 0.0f32..1.0, 0.0f32..1.0), 1..6), 0.0f32..0.3).prop_map(
        |(w, h, blobs, slope)| {
            let luma = (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f32 / w as f32, (i / w) as f32 / h as f32);
                    let nearest = blobs
                        .iter()
                        .min_by(|a, b| ((a.0 - x).powi(2) + (a.1 - y).powi(2)).total_cmp(&((b.0 - x).powi(2) + (b.1 - y).powi(2))))
                        .unwrap();
                    (nearest.2 * (1.0 - slope) + slope * x).clamp(0.0, 1.0)
                })
                .collect();
            Frame::new(0, w, h, luma).unwrap()
        },
    )
}

fn slic_strategy() -> impl Strategy<Value = SlicConfig> {
    (1usize..40, 0.005f32..1.0).prop_map(|(p, m)| SlicConfig { target_superpixels: p, compactness: m, ..Default::default() })
}

pub fn slic_partition() -> Result<(), String> {
    run(64, (frame_strategy(40), slic_strategy()), |(frame, cfg)| {
        let map = segment_slic(&frame, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(map.region_sizes().iter().sum::<usize>(), frame.width * frame.height);
        prop_assert!(map.check_invariants().is_ok(), "{:?}", map.check_invariants());
        Ok(())
    })
}

pub fn slic_determinism() -> Result<(), String> {
    run(32, (frame_strategy(40), slic_strategy()), |(frame, cfg)| {
        prop_assert_eq!(segment_slic(&frame, &cfg).unwrap(), segment_slic(&frame, &cfg).unwrap());
        Ok(())
    })
}

/// Small clip whose frames are the given frame plus per-frame jitter.
fn clip_from(frame: &Frame, frames: usize, seed: u64) -> FrameSequence {
    let meta = VideoMeta { width: frame.width, height: frame.height, frame_rate: FrameRate::NTSC, frame_count: frames, bit_depth: 32 };
    let mut data = Vec::with_capacity(frame.luma.len() * frames);
    let mut state = seed | 1;
    for _ in 0..frames {
        for &v in &frame.luma {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let jitter = (state >> 40) as f32 / (1u64 << 24) as f32 - 0.5;
            data.push((v + 0.01 * jitter).clamp(0.0, 1.0));
        }
    }
    FrameSequence::from_f32(meta, data).unwrap()
}

pub fn slic_label_permutation() -> Result<(), String> {
    let strategy = (frame_strategy(24), slic_strategy(), any::<u64>()).prop_flat_map(|(frame, cfg, seed)| {
        let map = segment_slic(&frame, &cfg).unwrap();
        let perm = Just((0..map.region_count as u32).collect::<Vec<_>>()).prop_shuffle();
        (Just(frame), Just(map), perm, Just(seed))
    });
    run(32, strategy, |(frame, map, perm, seed)| {
        let seq = clip_from(&frame, 40, seed);
        let mask = compute_steady_mask(&seq, &SteadyConfig { detrend_window: 5, ..Default::default() }).unwrap();
        let shuffled = map.relabeled(&perm);
        let a = select_steady_superpixels(&map, &mask, 1).unwrap();
        let b = select_steady_superpixels(&shuffled, &mask, 1).unwrap();
        let sa = region_series(&seq, &a).unwrap();
        let sb = region_series(&seq, &b).unwrap();
        prop_assert_eq!(sa.len(), sb.len());
        for s in &sa {
            let other = sb.iter().find(|o| o.region_label == perm[s.region_label as usize]);
            prop_assert!(other.is_some_and(|o| o.values == s.values));
        }
        Ok(())
    })
}

pub fn pearson_affine_invariance() -> Result<(), String> {
    let pair = (3usize..60).prop_flat_map(|n| (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n)));
    run(256, (pair, 0.01f64..100.0, -50.0f64..50.0, any::<bool>()), |((a, b), alpha, beta, flip)| {
        let s = if flip { -alpha } else { alpha };
        let t: Vec<f64> = a.iter().map(|v| s * v + beta).collect();
        let base = pearson(&a, &b).unwrap();
        let moved = pearson(&t, &b).unwrap();
        match (base, moved) {
            (Some(x), Some(y)) => {
                let want = if flip { -x } else { x };
                prop_assert!((y - want).abs() < 1e-9, "{} vs {}", y, want);
            }
            (x, y) => prop_assert_eq!(x, y),
        }
        Ok(())
    })
}

pub fn enf_amplitude_offset_invariance() -> Result<(), String> {
    let fs = FrameRate::NTSC.hz();
    let meta = VideoMeta { width: 1, height: 1, frame_rate: FrameRate::NTSC, frame_count: 900, bit_depth: 32 };
    let est = EnfEstimator::new(&meta, &StftConfig::default()).unwrap();
    let strategy = (9.7f64..10.5, 0.02f64..0.1, 0.0f64..6.3, prop::collection::vec(-0.02f64..0.02, 900), 0.2f64..1.6, -0.3f64..0.3);
    run(48, strategy, |(freq, amp, phase, noise, scale, offset)| {
        let base: Vec<f64> = (0..900)
            .map(|n| 0.4 + amp * (std::f64::consts::TAU * freq * n as f64 / fs + phase).sin() + noise[n])
            .collect();
        let v = est.estimate(&IntensitySeries::new(base.clone(), 0).unwrap()).unwrap();
        let scaled = est.estimate(&IntensitySeries::new(base.iter().map(|x| x * scale).collect(), 0).unwrap()).unwrap();
        let shifted = est.estimate(&IntensitySeries::new(base.iter().map(|x| x + offset).collect(), 0).unwrap()).unwrap();
        for ((a, b), c) in v.values.iter().zip(&scaled.values).zip(&shifted.values) {
            prop_assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9, "{} {} {}", a, b, c);
        }
        Ok(())
    })
}

pub fn steady_monotonicity() -> Result<(), String> {
    let strategy = (frame_strategy(16), any::<u64>(), 0.001f32..0.2, 0.001f32..0.2, 0usize..60, 0usize..60, 1usize..10);
    run(48, strategy, |(frame, seed, t1, t2, tau1, tau2, p)| {
        let mut seq_frames = clip_from(&frame, 60, seed);
        // an object crossing part of the frame midway
        if frame.width > 2 {
            let meta = *seq_frames.meta();
            let mut data = Vec::with_capacity(meta.pixels() * meta.frame_count);
            for f in seq_frames.frames() {
                let mut luma = f.luma;
                if (20..30).contains(&f.index) {
                    for v in luma.iter_mut().step_by(3) {
                        *v = 1.0 - *v;
                    }
                }
                data.extend(luma);
            }
            seq_frames = FrameSequence::from_f32(meta, data).unwrap();
        }
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let cfg = |t| SteadyConfig { detrend_window: 5, steadiness_threshold: t, tau: 1 };
        let m_lo = compute_steady_mask(&seq_frames, &cfg(lo)).unwrap();
        let m_hi = compute_steady_mask(&seq_frames, &cfg(hi)).unwrap();
        prop_assert!(m_lo.mask.iter().zip(&m_hi.mask).all(|(&a, &b)| !a || b));
        let map = segment_slic(&frame, &SlicConfig { target_superpixels: p, ..Default::default() }).unwrap();
        let (small, large) = (tau1.min(tau2), tau1.max(tau2));
        let set_small = select_steady_superpixels(&map, &m_hi, small).unwrap();
        let set_large = select_steady_superpixels(&map, &m_hi, large).unwrap();
        prop_assert!(set_large.count() <= set_small.count());
        for r in &set_small.regions {
            prop_assert!(r.pixels.len() > small);
            for &(x, y) in &r.pixels {
                prop_assert!(m_hi.get(x as usize, y as usize) && map.label(x as usize, y as usize) == r.label);
            }
        }
        Ok(())
    })
}

pub fn simulator_determinism() -> Result<(), String> {
    let strategy = (16usize..40, 12usize..30, 1.0f64..3.0, any::<u64>(), any::<bool>(), any::<bool>(), 0.0f32..0.03);
    run(24, strategy, |(w, h, seconds, seed, present, rolling, noise)| {
        let recipe = ClipRecipe {
            width: w,
            height: h,
            seconds,
            seed,
            noise_std: noise,
            label: if present { ClipLabel::EnfPresent } else { ClipLabel::EnfAbsent },
            shutter: if rolling { ShutterKind::Rolling } else { ShutterKind::Global },
            ..Default::default()
        };
        let (a, ta) = recipe.render().unwrap();
        let (b, tb) = recipe.render().unwrap();
        prop_assert!(a == b);
        prop_assert!(ta == tb);
        Ok(())
    })
}
