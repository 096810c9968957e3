//! Raw 19-channel recordings to labelled 16-channel montage windows.

mod filter;
pub mod io;
mod montage;
mod recording;
mod segment;

pub use filter::{lowpass_filter, Biquad, SosFilter};
pub use montage::{
    compute_montages, flip_electrodes, flip_left_right, mirror_montage, montage_group, montage_name, montage_names,
    LATERAL_SWAPS, MONTAGE_PAIRS,
};
pub use recording::{
    electrode_index, MontageGroup, MontageRecording, MontageSequence, RawRecording, ELECTRODES, NUM_ELECTRODES,
    NUM_MONTAGES,
};
pub use segment::{segment, sequence_id};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Low-pass cutoff in Hz. Must sit below Nyquist.
    pub cutoff_hz: f64,
    /// Window length in seconds.
    pub window_s: f64,
    /// Context shown on each side of a window, in seconds.
    pub context_s: f64,
    /// Expected sample rate; recordings at any other rate are rejected.
    pub sample_rate_hz: Option<f64>,
    /// Butterworth order of a single pass.
    pub filter_order: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 60.0,
            window_s: 16.0,
            context_s: 6.0,
            sample_rate_hz: None,
            filter_order: 8,
        }
    }
}

impl PipelineConfig {
    /// Defaults for a given sample rate: 60 Hz cutoff where the rate allows,
    /// otherwise the same 0.3 cutoff-to-rate ratio (19.2 Hz at 64 Hz).
    pub fn for_rate(sample_rate_hz: f64) -> Self {
        Self {
            cutoff_hz: 60.0f64.min(0.3 * sample_rate_hz),
            sample_rate_hz: Some(sample_rate_hz),
            ..Self::default()
        }
    }

    pub fn validate_for(&self, sample_rate_hz: f64) -> Result<()> {
        if let Some(expected) = self.sample_rate_hz {
            if (expected - sample_rate_hz).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "recording sampled at {sample_rate_hz} Hz, pipeline expects {expected} Hz"
                )));
            }
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {} Hz is not below Nyquist ({} Hz)",
                self.cutoff_hz,
                sample_rate_hz / 2.0
            )));
        }
        if !(self.window_s > 0.0 && self.context_s > 0.0) {
            return Err(Error::Config("window and context lengths must be positive".into()));
        }
        if self.window_samples(sample_rate_hz) == 0 {
            return Err(Error::Config("window shorter than one sample".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate_hz: f64) -> usize {
        (self.window_s * sample_rate_hz).round() as usize
    }

    pub fn context_samples(&self, sample_rate_hz: f64) -> usize {
        (self.context_s * sample_rate_hz).round() as usize
    }
}

/// Filter, derive montages and segment one recording.
pub fn preprocess(rec: &RawRecording, cfg: &PipelineConfig) -> Result<Vec<MontageSequence>> {
    let filtered = lowpass_filter(rec, cfg)?;
    let montages = compute_montages(&filtered)?;
    segment(&montages, cfg)
}

/// Preprocess every recording in `raw_dir` into a sequence store at `out_dir`.
/// Any `cohort.json` label manifest travels along. Returns the sequence count.
pub fn run_pipeline(raw_dir: &std::path::Path, out_dir: &std::path::Path, cfg: &PipelineConfig) -> Result<usize> {
    let mut seqs = Vec::new();
    for header in io::list_recordings(raw_dir)? {
        seqs.extend(preprocess(&io::read_recording(&header)?, cfg)?);
    }
    if seqs.is_empty() {
        return Err(Error::Input(format!("no recordings in {}", raw_dir.display())));
    }
    io::write_sequences(out_dir, &seqs)?;
    let labels = raw_dir.join(crate::cohort::COHORT_MANIFEST);
    if labels.exists() {
        let bytes = std::fs::read(&labels).map_err(|e| Error::io(&labels, e))?;
        io::write_atomic(&out_dir.join(crate::cohort::COHORT_MANIFEST), &bytes)?;
    }
    Ok(seqs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_rate_defaults() {
        let cfg = PipelineConfig::for_rate(64.0);
        assert!((cfg.cutoff_hz - 19.2).abs() < 1e-12);
        assert!(cfg.validate_for(64.0).is_ok());
        assert!(cfg.validate_for(200.0).is_err());
        assert_eq!(cfg.window_samples(64.0), 1024);
        assert_eq!(cfg.context_samples(64.0), 384);
        assert_eq!(PipelineConfig::for_rate(200.0).cutoff_hz, 60.0);
    }

    #[test]
    fn rejects_nonpositive_lengths() {
        let cfg = PipelineConfig {
            window_s: 0.0,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate_for(200.0).is_err());
    }
}
