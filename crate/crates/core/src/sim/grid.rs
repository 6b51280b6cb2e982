use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate of the internal frequency trace.
pub const TRACE_RATE_HZ: f64 = 1000.0;

/// Reflected random walk driving the supply/demand imbalance. Both
/// parameters are expressed in terms of the resulting frequency deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceWalk {
    /// Standard deviation of the deviation increments over one second, Hz.
    pub step_std_hz: f64,
    /// Reflecting bound on `|f_e|`, Hz.
    pub max_deviation_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub f_nominal: f64,
    /// Inertia constant `H` in seconds; `f_e = f_n / (2H) * (P_s - P_d)`.
    pub inertia_h: f64,
    pub imbalance: ImbalanceWalk,
    pub initial_phase: f64,
    /// RMS voltage; only scales the waveform.
    pub v_effective: f64,
}

impl Default for GridModel {
    fn default() -> Self {
        GridModel {
            f_nominal: 50.0,
            inertia_h: 5.0,
            imbalance: ImbalanceWalk { step_std_hz: 0.01, max_deviation_hz: 0.05 },
            initial_phase: 0.0,
            v_effective: std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

impl GridModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_nominal > 0.0 && self.inertia_h > 0.0 && self.v_effective > 0.0) {
            return Err(Error::config("grid needs positive nominal frequency, inertia and voltage"));
        }
        let w = self.imbalance;
        if !(w.step_std_hz >= 0.0 && (0.0..=0.1).contains(&w.max_deviation_hz)) {
            return Err(Error::config("grid walk needs step_std >= 0 and 0 <= max_deviation <= 0.1 Hz"));
        }
        Ok(())
    }

    /// Converts a frequency deviation to the imbalance `P_s - P_d` (per unit).
    pub fn imbalance_for_deviation(&self, f_e: f64) -> f64 {
        f_e * 2.0 * self.inertia_h / self.f_nominal
    }

    pub fn deviation_for_imbalance(&self, imbalance: f64) -> f64 {
        self.f_nominal / (2.0 * self.inertia_h) * imbalance
    }

    /// Mean of `|V(t)|` over a cycle.
    pub fn mean_abs_voltage(&self) -> f64 {
        2.0 * std::f64::consts::SQRT_2 * self.v_effective / std::f64::consts::PI
    }
}

/// Grid frequency over time, sampled at [`TRACE_RATE_HZ`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnfTrace {
    pub f_nominal: f64,
    /// `f_e` per sample, Hz.
    pub deviation_hz: Vec<f64>,
    /// Trapezoid integral of `f_e` in cycles, per sample.
    cumulative: Vec<f64>,
}

impl EnfTrace {
    pub fn from_deviation(f_nominal: f64, deviation_hz: Vec<f64>) -> Self {
        let dt = 1.0 / TRACE_RATE_HZ;
        let mut cumulative = Vec::with_capacity(deviation_hz.len());
        let mut acc = 0.0;
        for (i, &d) in deviation_hz.iter().enumerate() {
            if i > 0 {
                acc += 0.5 * (deviation_hz[i - 1] + d) * dt;
            }
            cumulative.push(acc);
        }
        EnfTrace { f_nominal, deviation_hz, cumulative }
    }

    pub fn duration(&self) -> f64 {
        self.deviation_hz.len().saturating_sub(1) as f64 / TRACE_RATE_HZ
    }

    /// `f(t) = f_n + f_e(t)` per sample.
    pub fn frequency_hz(&self) -> impl Iterator<Item = f64> + '_ {
        self.deviation_hz.iter().map(move |d| self.f_nominal + d)
    }

    /// `integral_0^t f_e`, linearly interpolated between samples.
    fn integral(&self, t: f64) -> f64 {
        let pos = t * TRACE_RATE_HZ;
        let last = self.cumulative.len() - 1;
        if pos <= 0.0 {
            return self.deviation_hz[0] * t;
        }
        let i = pos.floor() as usize;
        if i >= last {
            return self.cumulative[last] + self.deviation_hz[last] * (t - last as f64 / TRACE_RATE_HZ);
        }
        let frac = pos - i as f64;
        self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i])
    }

    /// Instantaneous phase `2 pi f_n t + 2 pi integral f_e + alpha`.
    pub fn phase(&self, t: f64, alpha: f64) -> f64 {
        std::f64::consts::TAU * (self.f_nominal * t + self.integral(t)) + alpha
    }
}

/// Reflected random walk of the grid imbalance, turned into a frequency
/// trace of at least `duration` seconds. A walk with zero step size stays at
/// zero deviation; otherwise it starts from its stationary (uniform) law.
pub fn synthesize_enf_trace(grid: &GridModel, duration: f64, seed: u64) -> Result<EnfTrace> {
    grid.validate()?;
    if !(duration > 0.0) {
        return Err(Error::config("trace duration must be positive"));
    }
    let n = (duration * TRACE_RATE_HZ).ceil() as usize + 1;
    let bound = grid.imbalance_for_deviation(grid.imbalance.max_deviation_hz);
    let sigma = grid.imbalance_for_deviation(grid.imbalance.step_std_hz) * (1.0 / TRACE_RATE_HZ).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = if sigma > 0.0 && bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
    let mut dev = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            x = reflect(x + sigma * z, bound);
        }
        dev.push(grid.deviation_for_imbalance(x));
    }
    Ok(EnfTrace::from_deviation(grid.f_nominal, dev))
}

fn reflect(mut x: f64, bound: f64) -> f64 {
    if bound <= 0.0 {
        return 0.0;
    }
    while x.abs() > bound {
        x = if x > bound { 2.0 * bound - x } else { -2.0 * bound - x };
    }
    x
}

/// `V(t) = sqrt(2) V0 cos(phase(t))` sampled at `sample_rate` over the trace.
pub fn voltage_waveform(trace: &EnfTrace, grid: &GridModel, sample_rate: f64) -> Result<Vec<f64>> {
    if sample_rate < 10.0 * grid.f_nominal {
        return Err(Error::config(format!("sample rate {sample_rate} Hz is below 10x the nominal frequency")));
    }
    let amp = std::f64::consts::SQRT_2 * grid.v_effective;
    let n = (trace.duration() * sample_rate).floor() as usize + 1;
    Ok((0..n).map(|i| amp * trace.phase(i as f64 / sample_rate, grid.initial_phase).cos()).collect())
}
