//! Synthetic free-span vibration trials.
//!
//! The exposed span is a pinned-pinned Euler-Bernoulli beam excited by waves.
//! Each mode `n` contributes, at position `x` inside the span,
//!
//! ```text
//! H * g(t) * A_n * n^-2 * sin(n pi (x - x0) / L) * [ sin(2 pi f_w t + theta) + s_n(t) ]
//! ```
//!
//! with `A_n = 1 / sqrt((1 - r^2)^2 + (2 zeta r)^2)`, `r = f_w / f_n` and `H`
//! the wave height. `s_n` is the resonant part: a carrier at the damped
//! natural frequency whose envelope is re-excited once per wave crest, with
//! jittered timing and size, and decays with the modal damping. A slow
//! wave-group modulation scales the whole forcing, and modes are weighted by
//! `n^-2` so the fundamental dominates. Channels outside the span carry 10 %
//! of the mid-span response. A two-channel moving average stands in for
//! gauge-length smoothing, then white Gaussian noise is added.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dasio::{DasRecord, TrialMetadata};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Fraction of the mid-span response seen by channels outside the span.
pub const LEAK_FRACTION: f64 = 0.1;

/// Standard deviation of kick timing, as a fraction of the wave period.
pub const KICK_TIMING_JITTER: f64 = 0.1;
/// Relative standard deviation of kick size.
pub const KICK_SIZE_JITTER: f64 = 0.2;

/// Depth and period of the slow wave-height modulation (wave groups).
pub const WAVE_GROUP_DEPTH: f64 = 0.15;
pub const WAVE_GROUP_PERIOD_S: f64 = 60.0;

const STREAM_PHASE: u64 = 1;
const STREAM_KICKS: u64 = 16;
const STREAM_NOISE: u64 = 1 << 20;

/// Physical and acquisition parameters of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub section_id: String,
    pub trial_index: u32,
    pub exposure_length_m: f64,
    pub span_start_m: f64,
    pub wave_height_m: f64,
    pub wave_period_s: f64,
    pub duration_s: f64,
    pub fs: f64,
    pub channel_spacing: f64,
    pub n_channels: usize,
    pub first_channel_position: f64,
    /// Bending stiffness EI in N m^2.
    pub bending_stiffness: f64,
    /// Mass per unit length in kg/m.
    pub linear_mass: f64,
    pub n_modes: usize,
    pub modal_damping: f64,
    /// Noise standard deviation relative to the peak noise-free response.
    pub noise_rms: f64,
    pub gauge_smoothing: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            section_id: "S1".into(),
            trial_index: 1,
            exposure_length_m: 6.0,
            span_start_m: 4.0,
            wave_height_m: 0.15,
            wave_period_s: 1.25,
            duration_s: 120.0,
            fs: 2000.0,
            channel_spacing: 0.8,
            n_channels: 40,
            first_channel_position: 0.0,
            bending_stiffness: 4.73e3,
            linear_mass: 4.0,
            n_modes: 3,
            modal_damping: 0.03,
            noise_rms: 0.05,
            gauge_smoothing: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.exposure_length_m > 0.0) {
            return bad("exposure_length_m must be positive");
        }
        if !(self.bending_stiffness > 0.0) || !(self.linear_mass > 0.0) {
            return bad("bending_stiffness and linear_mass must be positive");
        }
        if self.n_modes < 1 {
            return bad("n_modes must be at least 1");
        }
        if !(self.modal_damping > 0.0 && self.modal_damping < 1.0) {
            return bad("modal_damping must lie in (0, 1)");
        }
        if !(self.wave_period_s > 0.0) || !(self.wave_height_m >= 0.0) {
            return bad("wave_period_s must be positive and wave_height_m non-negative");
        }
        if !(self.fs > 0.0) || !(self.channel_spacing > 0.0) || self.n_channels == 0 {
            return bad("fs, channel_spacing and n_channels must be positive");
        }
        if !(self.duration_s * self.fs >= 1.0) {
            return bad("duration must cover at least one sample");
        }
        if !(self.noise_rms >= 0.0) {
            return bad("noise_rms must be non-negative");
        }
        if self.trial_index < 1 {
            return bad("trial_index must be >= 1");
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    /// Stable identifier `<section>_L<len>_H<height>_P<period>_t<index>` with `.` written as `p`.
    pub fn trial_id(&self) -> String {
        let num = |v: f64| v.to_string().replace('.', "p").replace('-', "m");
        format!(
            "{}_L{}_H{}_P{}_t{}",
            self.section_id,
            num(self.exposure_length_m),
            num(self.wave_height_m),
            num(self.wave_period_s),
            self.trial_index
        )
    }
}

/// Natural frequencies of a pinned-pinned beam, `f_n = n^2 pi / (2 L^2) sqrt(EI / mu)`.
pub fn natural_frequencies(length_m: f64, ei: f64, mu: f64, n_modes: usize) -> Vec<f64> {
    let base = PI / (2.0 * length_m * length_m) * (ei / mu).sqrt();
    (1..=n_modes).map(|n| (n * n) as f64 * base).collect()
}

/// Pinned-pinned mode shape `sin(n pi x / L)`; zero outside `[0, L]`.
pub fn mode_shape(n: usize, length_m: f64, x: f64) -> f64 {
    if !(0.0..=length_m).contains(&x) {
        return 0.0;
    }
    (n as f64 * PI * x / length_m).sin()
}

/// Single-degree-of-freedom dynamic magnification.
pub fn magnification(f_wave: f64, f_natural: f64, damping: f64) -> f64 {
    let r = f_wave / f_natural;
    1.0 / ((1.0 - r * r).powi(2) + (2.0 * damping * r).powi(2)).sqrt()
}

/// Per-channel weights for each modal source, after leak-through and smoothing.
fn channel_weights(cfg: &SimConfig, freqs: &[f64]) -> Vec<Vec<f64>> {
    let f_wave = 1.0 / cfg.wave_period_s;
    let l = cfg.exposure_length_m;
    let modal_gain: Vec<f64> = (1..=cfg.n_modes)
        .map(|n| cfg.wave_height_m * magnification(f_wave, freqs[n - 1], cfg.modal_damping) / (n * n) as f64)
        .collect();
    let raw: Vec<Vec<f64>> = (0..cfg.n_channels)
        .map(|c| {
            let x = cfg.first_channel_position + c as f64 * cfg.channel_spacing - cfg.span_start_m;
            let inside = (0.0..=l).contains(&x);
            (1..=cfg.n_modes)
                .map(|n| {
                    let shape = if inside {
                        mode_shape(n, l, x)
                    } else {
                        LEAK_FRACTION * mode_shape(n, l, 0.5 * l)
                    };
                    modal_gain[n - 1] * shape
                })
                .collect()
        })
        .collect();
    if !cfg.gauge_smoothing || cfg.n_channels < 2 {
        return raw;
    }
    (0..cfg.n_channels)
        .map(|c| {
            if c + 1 < cfg.n_channels {
                raw[c].iter().zip(&raw[c + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
            } else {
                raw[c].clone()
            }
        })
        .collect()
}

/// Unit-height modal time series `g(t) [sin(2 pi f_w t + theta) + s_n(t)]` for every mode.
fn modal_sources(cfg: &SimConfig, freqs: &[f64]) -> Vec<Vec<f64>> {
    let n = cfg.n_samples();
    let dt = 1.0 / cfg.fs;
    let f_wave = 1.0 / cfg.wave_period_s;
    let kick_rate = f_wave;
    let (theta, group_phase) = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_PHASE);
        (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI))
    };
    let group = |t: f64| 1.0 + WAVE_GROUP_DEPTH * (2.0 * PI * t / WAVE_GROUP_PERIOD_S + group_phase).sin();

    freqs
        .iter()
        .enumerate()
        .map(|(m, &fnat)| {
            let omega = 2.0 * PI * fnat;
            let decay_rate = cfg.modal_damping * omega;
            let omega_d = omega * (1.0 - cfg.modal_damping * cfg.modal_damping).sqrt();
            let decay = (-decay_rate * dt).exp();
            let mean_env = kick_rate / decay_rate;
            let norm = mean_env / std::f64::consts::SQRT_2;

            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_KICKS + m as u64);
            let carrier_phase: f64 = rng.random_range(0.0..2.0 * PI);
            let period = cfg.wave_period_s;
            let mut crest = rng.random_range(0.0..period);
            let draw_kick = |rng: &mut ChaCha8Rng, crest: f64| {
                let jitter: f64 = rng.sample(StandardNormal);
                let size: f64 = rng.sample(StandardNormal);
                (crest + KICK_TIMING_JITTER * period * jitter, (1.0 + KICK_SIZE_JITTER * size).max(0.0))
            };

            // run the envelope from well before t = 0 so it starts stationary
            let warmup = ((8.0 / decay_rate) * cfg.fs).ceil() as usize;
            let (mut next_kick, mut next_size) = draw_kick(&mut rng, crest);
            let mut envelope = mean_env;
            let mut out = Vec::with_capacity(n);
            for k in 0..warmup + n {
                let t = k as f64 * dt;
                envelope *= decay;
                while next_kick <= t {
                    envelope += next_size;
                    crest += period;
                    (next_kick, next_size) = draw_kick(&mut rng, crest);
                }
                if k >= warmup {
                    let ts = (k - warmup) as f64 * dt;
                    let steady = (2.0 * PI * f_wave * ts + theta).sin();
                    let resonant = envelope / norm * (omega_d * ts + carrier_phase).sin();
                    out.push(group(ts) * (steady + resonant));
                }
            }
            out
        })
        .collect()
}

/// Noise-free response, `n_samples x n_channels`.
pub fn simulate_response(cfg: &SimConfig) -> Result<Array2<f64>> {
    simulate_response_with(Exec::default(), cfg)
}

pub fn simulate_response_with(exec: Exec, cfg: &SimConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let freqs = natural_frequencies(cfg.exposure_length_m, cfg.bending_stiffness, cfg.linear_mass, cfg.n_modes);
    let weights = channel_weights(cfg, &freqs);
    let sources = modal_sources(cfg, &freqs);
    let n = cfg.n_samples();
    let columns = exec.map_range(cfg.n_channels, |c| channel_series(&weights[c], &sources, n));
    Ok(Array2::from_shape_fn((n, cfg.n_channels), |(t, c)| columns[c][t]))
}

fn channel_series(weights: &[f64], sources: &[Vec<f64>], n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| weights.iter().zip(sources).map(|(w, s)| w * s[t]).sum())
        .collect()
}

/// Simulates one trial with measurement noise.
pub fn simulate_trial(cfg: &SimConfig) -> Result<(DasRecord, TrialMetadata)> {
    simulate_trial_with(Exec::default(), cfg)
}

pub fn simulate_trial_with(exec: Exec, cfg: &SimConfig) -> Result<(DasRecord, TrialMetadata)> {
    cfg.validate()?;
    let freqs = natural_frequencies(cfg.exposure_length_m, cfg.bending_stiffness, cfg.linear_mass, cfg.n_modes);
    let weights = channel_weights(cfg, &freqs);
    let sources = modal_sources(cfg, &freqs);
    let n = cfg.n_samples();

    let clean: Vec<Vec<f64>> = exec.map_range(cfg.n_channels, |c| channel_series(&weights[c], &sources, n));
    let peak = clean
        .iter()
        .flat_map(|col| col.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let sigma = cfg.noise_rms * peak;

    let columns: Vec<Vec<f32>> = exec.map_range(cfg.n_channels, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_NOISE + c as u64);
        clean[c]
            .iter()
            .map(|v| {
                let e: f64 = rng.sample(StandardNormal);
                (v + sigma * e) as f32
            })
            .collect()
    });
    let samples = Array2::from_shape_fn((n, cfg.n_channels), |(t, c)| columns[c][t]);
    let record = DasRecord::new(samples, cfg.fs, cfg.channel_spacing, cfg.first_channel_position)?;
    let meta = TrialMetadata {
        trial_id: cfg.trial_id(),
        section_id: cfg.section_id.clone(),
        exposure_length_m: cfg.exposure_length_m,
        wave_height_m: cfg.wave_height_m,
        wave_period_s: cfg.wave_period_s,
        trial_index: cfg.trial_index,
        duration_s: record.duration_s(),
    };
    Ok((record, meta))
}
