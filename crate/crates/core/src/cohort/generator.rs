//! Archetype EEG-like signals for the five classes.
//!
//! Each class is a spatial field over the scalp multiplied by a time course,
//! on top of independent pink-noise background per electrode:
//!
//! | class   | time course                               | field                    |
//! |---------|-------------------------------------------|--------------------------|
//! | GRDA    | 1-4 Hz sinusoid                           | bilateral, frontal       |
//! | LRDA    | 1-4 Hz sinusoid                           | one hemisphere           |
//! | GPD     | sharp transients repeating at 0.5-3 Hz    | bilateral, fronto-central|
//! | LPD     | sharp transients repeating at 0.5-3 Hz    | one hemisphere           |
//! | Seizure | chirp with drifting frequency and growing amplitude | either        |
//!
//! Every patient draws a profile (electrode gains, frequency scalings, focus
//! positions, noise level) whose spread is set by `patient_variation`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::labels::{ClassLabel, NUM_CLASSES};
use crate::rng::Rng as StreamRng;
use crate::signal::NUM_ELECTRODES;

/// Approximate scalp coordinates: x runs left (-) to right (+), y back (-) to front (+).
const POSITIONS: [(f64, f64); NUM_ELECTRODES] = [
    (-0.30, 0.95),  // Fp1
    (0.30, 0.95),   // Fp2
    (-0.40, 0.55),  // F3
    (0.40, 0.55),   // F4
    (-0.80, 0.60),  // F7
    (0.80, 0.60),   // F8
    (-1.00, 0.00),  // T3
    (1.00, 0.00),   // T4
    (-0.80, -0.60), // T5
    (0.80, -0.60),  // T6
    (-0.50, 0.00),  // C3
    (0.50, 0.00),   // C4
    (-0.40, -0.55), // P3
    (0.40, -0.55),  // P4
    (-0.30, -0.95), // O1
    (0.30, -0.95),  // O2
    (0.00, 0.50),   // Fz
    (0.00, 0.00),   // Cz
    (0.00, -0.50),  // Pz
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Per-patient idiosyncrasies.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientProfile {
    pub electrode_gain: [f64; NUM_ELECTRODES],
    pub noise_uv: f64,
    /// Multiplier on each class's characteristic frequency or repetition rate.
    pub freq_scale: [f64; NUM_CLASSES],
    /// Antero-posterior shift of each class's focus.
    pub focus_shift: [f64; NUM_CLASSES],
    /// Left/right imbalance added to bilateral fields.
    pub asymmetry: f64,
    /// Fraction of a lateralised field leaking to the other hemisphere.
    pub spread: f64,
    pub spike_width_s: f64,
    pub left_bias: f64,
}

impl PatientProfile {
    pub fn draw(variation: f64, rng: &mut StreamRng) -> Self {
        let v = variation.max(0.0);
        let mut electrode_gain = [1.0; NUM_ELECTRODES];
        for g in &mut electrode_gain {
            *g = (0.25 * v * normal(rng)).exp();
        }
        let mut freq_scale = [1.0; NUM_CLASSES];
        for f in &mut freq_scale {
            *f = (0.35 * v * normal(rng)).exp();
        }
        let mut focus_shift = [0.0; NUM_CLASSES];
        for f in &mut focus_shift {
            *f = 0.3 * v * normal(rng);
        }
        Self {
            electrode_gain,
            noise_uv: 6.0 * (0.3 * v * normal(rng)).exp(),
            freq_scale,
            focus_shift,
            asymmetry: (0.5 * v * rng.random_range(-1.0..1.0)).clamp(-0.9, 0.9),
            spread: (0.5 * v * rng.random::<f64>()).min(0.9),
            spike_width_s: 0.05 * (0.3 * v * normal(rng)).exp(),
            left_bias: (0.5 + 0.4 * v.min(1.0) * rng.random_range(-1.0..1.0)).clamp(0.05, 0.95),
        }
    }

    /// A profile with no idiosyncrasies at all.
    pub fn neutral() -> Self {
        Self {
            electrode_gain: [1.0; NUM_ELECTRODES],
            noise_uv: 6.0,
            freq_scale: [1.0; NUM_CLASSES],
            focus_shift: [0.0; NUM_CLASSES],
            asymmetry: 0.0,
            spread: 0.0,
            spike_width_s: 0.05,
            left_bias: 0.5,
        }
    }

    pub fn draw_side(&self, rng: &mut StreamRng) -> Side {
        if rng.random::<f64>() < self.left_bias {
            Side::Left
        } else {
            Side::Right
        }
    }
}

fn bilateral_field(center_y: f64, width: f64, asymmetry: f64) -> [f64; NUM_ELECTRODES] {
    let mut f = [0.0; NUM_ELECTRODES];
    for (i, (x, y)) in POSITIONS.iter().enumerate() {
        f[i] = (-(y - center_y).powi(2) / width).exp() * (1.0 + asymmetry * x);
    }
    f
}

fn lateral_field(side: Side, center_y: f64, spread: f64) -> [f64; NUM_ELECTRODES] {
    let fx = 0.85 * side.sign();
    let mut f = [0.0; NUM_ELECTRODES];
    for (i, (x, y)) in POSITIONS.iter().enumerate() {
        let near = (-((x - fx).powi(2) + (y - center_y).powi(2)) / 0.45).exp();
        let far = (-((x + fx).powi(2) + (y - center_y).powi(2)) / 0.45).exp();
        f[i] = near + spread * far;
    }
    f
}

/// Pink (1/f) noise using Paul Kellet's refined filter, scaled to `rms`.
fn pink_noise(n: usize, rms: f64, rng: &mut StreamRng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    // Burn in so the slow poles are not starting from zero.
    for i in 0..n + 256 {
        let w = normal(rng);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let v = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
        b[6] = w * 0.115926;
        if i >= 256 {
            out.push(v);
        }
    }
    let mean = out.iter().sum::<f64>() / n.max(1) as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    let scale = if var > 0.0 { rms / var.sqrt() } else { 0.0 };
    out.iter().map(|v| (v - mean) * scale).collect()
}

/// Sharp biphasic transient followed by a slow after-wave, peak about 1.
fn transient(t: f64, width: f64) -> f64 {
    let u = t / width;
    let spike = -1.65 * u * (-0.5 * u * u).exp();
    let slow = -0.35 * (-0.5 * ((t - 4.0 * width) / (2.5 * width)).powi(2)).exp();
    spike + slow
}

fn periodic(n: usize, fs: f64, rate: f64, width: f64, rng: &mut StreamRng) -> Vec<f64> {
    let period = 1.0 / rate;
    let mut times = Vec::new();
    let mut t = rng.random_range(0.0..period);
    let dur = n as f64 / fs;
    while t < dur + period {
        times.push(t);
        t += period * (1.0 + 0.05 * normal(rng));
    }
    (0..n)
        .map(|i| {
            let ti = i as f64 / fs;
            times
                .iter()
                .filter(|&&tk| (ti - tk).abs() < 12.0 * width)
                .map(|&tk| transient(ti - tk, width))
                .sum()
        })
        .collect()
}

fn rhythmic(n: usize, fs: f64, freq: f64, rng: &mut StreamRng) -> Vec<f64> {
    let phase = rng.random_range(0.0..2.0 * PI);
    let wobble = rng.random_range(0.05..0.2);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (1.0 + wobble * (2.0 * PI * 0.1 * t).sin()) * (2.0 * PI * freq * t + phase).sin()
        })
        .collect()
}

fn chirp(n: usize, fs: f64, f0: f64, f1: f64, rng: &mut StreamRng) -> Vec<f64> {
    let dur = n as f64 / fs;
    let mut phase = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let frac = t / dur;
            let f = f0 + (f1 - f0) * frac;
            phase += 2.0 * PI * f / fs;
            let amp = 0.3 + 0.7 * frac;
            amp * (phase.sin() + 0.35 * (2.0 * phase).sin())
        })
        .collect()
}

/// Render one window of `n` samples for all 19 electrodes.
pub fn render_window(
    class: ClassLabel,
    side: Side,
    profile: &PatientProfile,
    fs: f64,
    n: usize,
    rng: &mut StreamRng,
) -> Vec<Vec<f64>> {
    let ci = class.index();
    let fscale = profile.freq_scale[ci] * (0.05 * normal(rng)).exp();
    let shift = profile.focus_shift[ci];
    let amp_jitter = (0.15 * normal(rng)).exp();
    let nyquist_guard = 0.45 * fs;

    let (field, course, amplitude) = match class {
        ClassLabel::Grda => (
            bilateral_field(0.9 + shift, 0.6, profile.asymmetry),
            rhythmic(n, fs, (1.8 * fscale).clamp(1.0, 4.0), rng),
            70.0,
        ),
        ClassLabel::Lrda => (
            lateral_field(side, 0.2 + shift, profile.spread),
            rhythmic(n, fs, (1.6 * fscale).clamp(1.0, 4.0), rng),
            70.0,
        ),
        ClassLabel::Gpd => (
            bilateral_field(0.5 + shift, 0.9, profile.asymmetry),
            periodic(n, fs, (1.5 * fscale).clamp(0.5, 3.0), profile.spike_width_s, rng),
            110.0,
        ),
        ClassLabel::Lpd => (
            lateral_field(side, 0.1 + shift, profile.spread),
            periodic(n, fs, (1.0 * fscale).clamp(0.5, 3.0), profile.spike_width_s, rng),
            110.0,
        ),
        ClassLabel::Seizure => {
            let field = if rng.random::<f64>() < 0.7 {
                lateral_field(side, 0.2 + shift, profile.spread)
            } else {
                bilateral_field(0.6 + shift, 0.8, profile.asymmetry)
            };
            let f0 = (5.5 * fscale).clamp(3.0, nyquist_guard.min(8.0));
            let f1 = (2.5 * fscale).clamp(1.5, 4.0);
            (field, chirp(n, fs, f0, f1, rng), 90.0)
        }
    };

    (0..NUM_ELECTRODES)
        .map(|e| {
            let noise = pink_noise(n, profile.noise_uv, rng);
            let g = profile.electrode_gain[e] * amplitude * amp_jitter * field[e];
            course.iter().zip(noise).map(|(s, b)| g * s + b).collect()
        })
        .collect()
}
