//! Synthetic multi-patient cohort with ground truth, label noise and a
//! simulated reviewer.

mod expert;
mod generator;
mod noise;
mod split;

pub use expert::SimulatedExpert;
pub use generator::{render_window, PatientProfile, Side};
pub use noise::{corrupt_labels, ConfusionBias};
pub use split::{split_by_patient, PatientMode, Split};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, NUM_CLASSES};
use crate::rng;
use crate::signal::{io, sequence_id, RawRecording};

pub const COHORT_MANIFEST: &str = "cohort.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub patient_count: usize,
    /// Windows per class, in [`ClassLabel::ALL`] order.
    pub per_class: [usize; NUM_CLASSES],
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub seed: u64,
    /// Probability that a window's initial label is wrong.
    pub rho: f64,
    pub confusion: ConfusionBias,
    /// Spread of per-patient idiosyncrasies; 0 makes all patients identical.
    pub patient_variation: f64,
}

impl Default for CohortSpec {
    /// Desk scale: 2000 balanced windows at 64 Hz from 40 patients.
    fn default() -> Self {
        Self {
            patient_count: 40,
            per_class: [400; NUM_CLASSES],
            sample_rate_hz: 64.0,
            window_s: 16.0,
            seed: 42,
            rho: 0.2,
            confusion: ConfusionBias::default(),
            patient_variation: 0.25,
        }
    }
}

impl CohortSpec {
    /// 20 000 windows at 200 Hz.
    pub fn paper_scale() -> Self {
        Self {
            per_class: [4000; NUM_CLASSES],
            sample_rate_hz: 200.0,
            ..Self::default()
        }
    }

    pub fn total_windows(&self) -> usize {
        self.per_class.iter().sum()
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_windows() == 0 {
            return Err(Error::Config("every class quota is zero: empty cohort".into()));
        }
        if self.patient_count == 0 || self.patient_count > self.total_windows() {
            return Err(Error::Config(format!(
                "need between 1 and {} patients, got {}",
                self.total_windows(),
                self.patient_count
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.window_s > 0.0) || self.window_samples() == 0 {
            return Err(Error::Config("sample rate and window length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !(self.patient_variation >= 0.0) {
            return Err(Error::Config("patient variation must be nonnegative".into()));
        }
        self.confusion.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortWindow {
    pub sequence_id: String,
    pub patient_id: String,
    pub window_index: usize,
    pub true_label: ClassLabel,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub recordings: Vec<RawRecording>,
    pub windows: Vec<CohortWindow>,
}

impl Cohort {
    pub fn true_labels(&self) -> Vec<ClassLabel> {
        self.windows.iter().map(|w| w.true_label).collect()
    }
}

pub fn patient_id(p: usize) -> String {
    format!("P{:03}", p + 1)
}

/// Generate recordings and per-window ground truth. Deterministic in the
/// spec: every patient profile and every window draws from its own stream.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort> {
    spec.validate()?;
    use rand::seq::SliceRandom;

    let mut labels: Vec<ClassLabel> = ClassLabel::ALL
        .iter()
        .zip(spec.per_class)
        .flat_map(|(c, n)| std::iter::repeat_n(*c, n))
        .collect();
    labels.shuffle(&mut rng::stream(spec.seed, "assign"));

    let total = labels.len();
    let n = spec.window_samples();
    let mut recordings = Vec::with_capacity(spec.patient_count);
    let mut windows = Vec::with_capacity(total);
    for p in 0..spec.patient_count {
        let pid = patient_id(p);
        let (lo, hi) = (p * total / spec.patient_count, (p + 1) * total / spec.patient_count);
        let profile = PatientProfile::draw(
            spec.patient_variation,
            &mut rng::stream_n(spec.seed, "patient", p as u64),
        );
        let mut channels: Vec<Vec<f32>> = (0..19).map(|_| Vec::with_capacity((hi - lo) * n)).collect();
        for (j, &label) in labels[lo..hi].iter().enumerate() {
            let mut wrng = rng::stream_n(spec.seed, &format!("window/{pid}"), j as u64);
            let side = profile.draw_side(&mut wrng);
            let block = render_window(label, side, &profile, spec.sample_rate_hz, n, &mut wrng);
            for (dst, src) in channels.iter_mut().zip(block) {
                dst.extend(src.into_iter().map(|v| v as f32));
            }
            windows.push(CohortWindow {
                sequence_id: sequence_id(&pid, j),
                patient_id: pid.clone(),
                window_index: j,
                true_label: label,
                side,
            });
        }
        recordings.push(RawRecording::new(pid, spec.sample_rate_hz, channels)?);
    }
    Ok(Cohort { recordings, windows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecording {
    pub patient_id: String,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestWindow {
    pub sequence_id: String,
    pub patient_id: String,
    pub true_label: ClassLabel,
    pub noisy_label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub spec: CohortSpec,
    pub recordings: Vec<ManifestRecording>,
    pub windows: Vec<ManifestWindow>,
}

/// Corrupt the labels and build the manifest.
pub fn label_cohort(spec: &CohortSpec, cohort: &Cohort) -> Result<CohortManifest> {
    let noisy = corrupt_labels(&cohort.true_labels(), spec.rho, &spec.confusion, spec.seed)?;
    Ok(CohortManifest {
        schema_version: io::SCHEMA_VERSION,
        seed: spec.seed,
        spec: spec.clone(),
        recordings: cohort
            .recordings
            .iter()
            .map(|r| ManifestRecording {
                patient_id: r.patient_id.clone(),
                header: format!("{}{}", r.patient_id, io::RECORDING_SUFFIX),
            })
            .collect(),
        windows: cohort
            .windows
            .iter()
            .zip(noisy)
            .map(|(w, noisy_label)| ManifestWindow {
                sequence_id: w.sequence_id.clone(),
                patient_id: w.patient_id.clone(),
                true_label: w.true_label,
                noisy_label,
            })
            .collect(),
    })
}

/// Write recordings and `cohort.json` into `dir`.
pub fn write_cohort(dir: &Path, spec: &CohortSpec, cohort: &Cohort) -> Result<CohortManifest> {
    let manifest = label_cohort(spec, cohort)?;
    for rec in &cohort.recordings {
        io::write_recording(dir, &rec.patient_id, rec)?;
    }
    io::write_json(&dir.join(COHORT_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Generate a cohort and write its preprocessed sequences and labels straight
/// into `dir`, skipping the raw recordings.
pub fn build_dataset(
    dir: &Path,
    spec: &CohortSpec,
    pipeline: &crate::signal::PipelineConfig,
) -> Result<CohortManifest> {
    let cohort = generate_cohort(spec)?;
    let manifest = label_cohort(spec, &cohort)?;
    let mut seqs = Vec::with_capacity(cohort.windows.len());
    for rec in &cohort.recordings {
        seqs.extend(crate::signal::preprocess(rec, pipeline)?);
    }
    io::write_sequences(dir, &seqs)?;
    io::write_json(&dir.join(COHORT_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CohortManifest> {
    io::read_json(&dir.join(COHORT_MANIFEST))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{compute_montages, NUM_MONTAGES};
    use std::f64::consts::PI;

    fn small_spec() -> CohortSpec {
        CohortSpec {
            patient_count: 4,
            per_class: [6; NUM_CLASSES],
            ..CohortSpec::default()
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = small_spec();
        let a = generate_cohort(&spec).unwrap();
        let b = generate_cohort(&spec).unwrap();
        assert_eq!(a, b);
        for c in ClassLabel::ALL {
            assert_eq!(a.windows.iter().filter(|w| w.true_label == c).count(), 6);
        }
        assert_eq!(a.recordings.len(), 4);
        let samples: usize = a.recordings.iter().map(|r| r.len()).sum();
        assert_eq!(samples, 30 * 1024);
        let other = generate_cohort(&CohortSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn empty_cohort_is_rejected() {
        let spec = CohortSpec {
            per_class: [0; NUM_CLASSES],
            ..CohortSpec::default()
        };
        assert!(matches!(generate_cohort(&spec), Err(Error::Config(_))));
    }

    fn render(class: ClassLabel, side: Side, seed: u64) -> RawRecording {
        let mut rng = rng::stream(seed, "test-window");
        let block = render_window(class, side, &PatientProfile::neutral(), 64.0, 1024, &mut rng);
        RawRecording::new(
            "t",
            64.0,
            block
                .into_iter()
                .map(|c| c.into_iter().map(|v| v as f32).collect())
                .collect(),
        )
        .unwrap()
    }

    /// Fraction of power in [lo, hi] Hz, by direct DFT summed over montages.
    fn band_fraction(rec: &RawRecording, lo: f64, hi: f64) -> f64 {
        let m = compute_montages(rec).unwrap();
        let fs = rec.sample_rate_hz;
        let (mut band, mut total) = (0.0, 0.0);
        for ch in &m.montages {
            let n = ch.len();
            let mean = ch.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
            for k in 1..n / 2 {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in ch.iter().enumerate() {
                    let ph = 2.0 * PI * (k * t) as f64 / n as f64;
                    re += (f64::from(*v) - mean) * ph.cos();
                    im -= (f64::from(*v) - mean) * ph.sin();
                }
                let p = re * re + im * im;
                let f = k as f64 * fs / n as f64;
                total += p;
                if (lo..=hi).contains(&f) {
                    band += p;
                }
            }
        }
        band / total
    }

    #[test]
    fn grda_power_concentrates_in_delta_band() {
        for seed in 0..3 {
            let frac = band_fraction(&render(ClassLabel::Grda, Side::Left, seed), 1.0, 4.0);
            assert!(frac >= 0.6, "seed {seed}: {frac}");
        }
    }

    fn rms(xs: &[f32]) -> f64 {
        (xs.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    }

    #[test]
    fn left_lpd_dominates_left_montages() {
        for seed in 0..3 {
            let m = compute_montages(&render(ClassLabel::Lpd, Side::Left, seed)).unwrap();
            let left: Vec<f32> = m.montages[..8].concat();
            let right: Vec<f32> = m.montages[8..NUM_MONTAGES].concat();
            let ratio = rms(&left) / rms(&right);
            assert!(ratio >= 2.0, "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn cohort_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let cohort = generate_cohort(&spec).unwrap();
        let manifest = write_cohort(dir.path(), &spec, &cohort).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
        assert_eq!(manifest.windows.len(), 30);
        let rec = io::read_recording(&dir.path().join(&manifest.recordings[1].header)).unwrap();
        assert_eq!(rec, cohort.recordings[1]);
    }
}
