//! Zero-phase Butterworth low-pass filtering.
//!
//! The filter is a cascade of second-order sections designed with the
//! bilinear transform (pre-warped cutoff) and applied forward then backward,
//! with odd-extension padding and steady-state initial conditions so that a
//! constant input passes through unchanged.

use std::f64::consts::PI;

use super::{PipelineConfig, RawRecording};
use crate::error::{Error, Result};

/// One second-order section in transposed direct form II. `a0` is normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a unit-step input produce a constant output.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = g - self.b[0];
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Butterworth low-pass of the given order.
    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) for fs = {sample_rate_hz} Hz"
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // Conjugate analog pole pair on the unit circle: s^2 + q s + 1.
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let q = 2.0 * theta.sin();
            let a0 = 1.0 + q * k + k2;
            let g = k2 / a0;
            sections.push(Biquad {
                b: [g, 2.0 * g, g],
                a: [2.0 * (k2 - 1.0) / a0, (1.0 - q * k + k2) / a0],
            });
        }
        if order % 2 == 1 {
            let g = k / (1.0 + k);
            sections.push(Biquad {
                b: [g, g, 0.0],
                a: [(k - 1.0) / (k + 1.0), 0.0],
            });
        }
        Ok(Self { sections })
    }

    /// Single forward pass with zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    fn filter_steady(&self, y: &mut [f64]) {
        let Some(&first) = y.first() else { return };
        let mut scale = first;
        for s in &self.sections {
            let zi = s.step_state();
            s.run(y, [zi[0] * scale, zi[1] * scale]);
            scale *= s.dc_gain();
        }
    }

    fn default_padlen(&self) -> usize {
        let zeros_b = self.sections.iter().filter(|s| s.b[2] == 0.0).count();
        let zeros_a = self.sections.iter().filter(|s| s.a[1] == 0.0).count();
        3 * (2 * self.sections.len() + 1 - zeros_b.min(zeros_a))
    }

    /// Forward-backward (zero-phase) filtering. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.default_padlen().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (x0, xn) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x0 - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * xn - x[n - 1 - i]));

        self.filter_steady(&mut ext);
        ext.reverse();
        self.filter_steady(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Magnitude response of a single pass at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections
            .iter()
            .map(|s| {
                let nr = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
                let ni = -(s.b[1] * s1 + s.b[2] * s2);
                let dr = 1.0 + s.a[0] * c1 + s.a[1] * c2;
                let di = -(s.a[0] * s1 + s.a[1] * s2);
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }
}

/// Zero-phase low-pass every channel of a recording.
pub fn lowpass_filter(rec: &RawRecording, cfg: &PipelineConfig) -> Result<RawRecording> {
    cfg.validate_for(rec.sample_rate_hz)?;
    let sos = SosFilter::butterworth_lowpass(cfg.filter_order, cfg.cutoff_hz, rec.sample_rate_hz)?;
    let channels = rec
        .channels()
        .iter()
        .map(|ch| {
            let x: Vec<f64> = ch.iter().map(|&v| f64::from(v)).collect();
            sos.filtfilt(&x).into_iter().map(|v| v as f32).collect()
        })
        .collect();
    RawRecording::new(rec.patient_id.clone(), rec.sample_rate_hz, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ELECTRODES;
    use proptest::prelude::*;

    /// Amplitude of the tone at `freq` via a direct single-bin DFT.
    fn tone_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * freq * n as f64 / fs;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    fn tone(freq: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn sos() -> SosFilter {
        SosFilter::butterworth_lowpass(8, 60.0, 200.0).unwrap()
    }

    #[test]
    fn dc_passes_unchanged() {
        let x = vec![37.5; 400];
        let y = sos().filtfilt(&x);
        for v in y {
            assert!((v - 37.5).abs() <= 1e-6 * 37.5);
        }
    }

    #[test]
    fn half_cutoff_tone_keeps_amplitude() {
        let fs = 200.0;
        let x = tone(30.0, fs, 8.0);
        let y = sos().filtfilt(&x);
        let ratio = tone_amplitude(&y, 30.0, fs) / tone_amplitude(&x, 30.0, fs);
        assert!((ratio - 1.0).abs() <= 0.12, "ratio {ratio}");
    }

    #[test]
    fn stopband_and_passband_limits() {
        let fs = 200.0;
        let f = sos();
        for freq in [75.0, 80.0, 90.0] {
            let x = tone(freq, fs, 8.0);
            let y = f.filtfilt(&x);
            let db = 20.0 * (tone_amplitude(&y, freq, fs) / tone_amplitude(&x, freq, fs)).log10();
            assert!(db <= -20.0, "{freq} Hz only {db} dB down");
        }
        for freq in [5.0, 20.0, 40.0, 48.0] {
            let x = tone(freq, fs, 8.0);
            let y = f.filtfilt(&x);
            let db = 20.0 * (tone_amplitude(&y, freq, fs) / tone_amplitude(&x, freq, fs)).log10();
            assert!(db >= -1.0, "{freq} Hz ripple {db} dB");
        }
        // Two passes square the single-pass response.
        let single = f.magnitude(75.0, fs);
        assert!(20.0 * (single * single).log10() <= -20.0);
    }

    #[test]
    fn default_cutoff_accepted_at_200hz_and_nyquist_rejected() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.cutoff_hz, 60.0);
        assert!(cfg.validate_for(200.0).is_ok());
        assert!(SosFilter::butterworth_lowpass(8, 100.0, 200.0).is_err());
        assert!(cfg.validate_for(64.0).is_err());
    }

    #[test]
    fn odd_order_design_has_unit_dc_gain() {
        let f = SosFilter::butterworth_lowpass(5, 10.0, 64.0).unwrap();
        assert!((f.magnitude(0.0, 64.0) - 1.0).abs() < 1e-12);
        let y = f.filtfilt(&[2.0; 50]);
        assert!(y.iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn recording_filter_preserves_shape() {
        let fs = 200.0;
        let chans: Vec<Vec<f32>> = (0..ELECTRODES.len())
            .map(|c| (0..300).map(|i| ((i * (c + 1)) % 17) as f32).collect())
            .collect();
        let rec = RawRecording::new("p", fs, chans).unwrap();
        let out = lowpass_filter(&rec, &PipelineConfig::default()).unwrap();
        assert_eq!(out.len(), rec.len());
        assert_eq!(out.patient_id, "p");
    }

    #[test]
    fn very_short_inputs() {
        let f = sos();
        assert!(f.filtfilt(&[]).is_empty());
        assert_eq!(f.filtfilt(&[3.0]), vec![3.0]);
        assert_eq!(f.filtfilt(&[1.0, 2.0, 3.0]).len(), 3);
    }

    proptest! {
        #[test]
        fn filtering_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "linearity");
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(-50.0..50.0)).collect();
            let y: Vec<f64> = (0..200).map(|_| rng.random_range(-50.0..50.0)).collect();
            let f = sos();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = f.filtfilt(&mix);
            let fx = f.filtfilt(&x);
            let fy = f.filtfilt(&y);
            let scale = lhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-6 * scale);
            }
        }
    }
}
