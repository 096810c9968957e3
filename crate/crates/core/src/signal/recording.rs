use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ELECTRODES: usize = 19;
pub const NUM_MONTAGES: usize = 16;

/// 10-20 electrode names in canonical storage order.
pub const ELECTRODES: [&str; NUM_ELECTRODES] = [
    "Fp1", "Fp2", "F3", "F4", "F7", "F8", "T3", "T4", "T5", "T6", "C3", "C4", "P3", "P4", "O1", "O2", "Fz", "Cz", "Pz",
];

pub fn electrode_index(name: &str) -> Option<usize> {
    ELECTRODES.iter().position(|e| e.eq_ignore_ascii_case(name))
}

/// A 19-channel scalp recording in microvolts, channels in [`ELECTRODES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub patient_id: String,
    pub sample_rate_hz: f64,
    channels: Vec<Vec<f32>>,
}

impl RawRecording {
    /// Build from named channels in any order. Every electrode must appear exactly once.
    pub fn from_named(
        patient_id: impl Into<String>,
        sample_rate_hz: f64,
        named: Vec<(String, Vec<f32>)>,
    ) -> Result<Self> {
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; NUM_ELECTRODES];
        for (name, data) in named {
            let idx = electrode_index(&name).ok_or_else(|| Error::Schema(format!("unknown channel {name:?}")))?;
            if slots[idx].is_some() {
                return Err(Error::Schema(format!("duplicate channel {name:?}")));
            }
            slots[idx] = Some(data);
        }
        let mut channels = Vec::with_capacity(NUM_ELECTRODES);
        for (idx, slot) in slots.into_iter().enumerate() {
            channels.push(slot.ok_or_else(|| Error::Schema(format!("missing channel {}", ELECTRODES[idx])))?);
        }
        Self::new(patient_id, sample_rate_hz, channels)
    }

    /// Build from channels already in canonical order.
    pub fn new(patient_id: impl Into<String>, sample_rate_hz: f64, channels: Vec<Vec<f32>>) -> Result<Self> {
        if channels.len() != NUM_ELECTRODES {
            return Err(Error::Schema(format!(
                "expected {NUM_ELECTRODES} channels, got {}",
                channels.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Schema(format!("invalid sample rate {sample_rate_hz}")));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::Schema("recording has no samples".into()));
        }
        if let Some(i) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::Schema(format!(
                "channel {} has {} samples, expected {len}",
                ELECTRODES[i],
                channels[i].len()
            )));
        }
        Ok(Self {
            patient_id: patient_id.into(),
            sample_rate_hz,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f32]> {
        electrode_index(name).map(|i| self.channels[i].as_slice())
    }

    pub fn into_channels(self) -> Vec<Vec<f32>> {
        self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MontageGroup {
    #[serde(rename = "LL")]
    LeftLateral,
    #[serde(rename = "LP")]
    LeftPosterior,
    #[serde(rename = "RP")]
    RightPosterior,
    #[serde(rename = "RL")]
    RightLateral,
}

/// The 16 bipolar montages of a recording, in LL, LP, RP, RL order.
#[derive(Debug, Clone, PartialEq)]
pub struct MontageRecording {
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub montages: Vec<Vec<f32>>,
}

impl MontageRecording {
    pub fn len(&self) -> usize {
        self.montages.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One fixed-length montage window plus the context the reviewer sees on
/// either side. Sample blocks are channel-major (`[channel][time]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MontageSequence {
    pub sequence_id: String,
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub window_samples: usize,
    pub context_samples: usize,
    pub core: Vec<f32>,
    pub left_context: Vec<f32>,
    pub right_context: Vec<f32>,
    pub left_valid: bool,
    pub right_valid: bool,
}

impl MontageSequence {
    pub fn core_channel(&self, c: usize) -> &[f32] {
        &self.core[c * self.window_samples..(c + 1) * self.window_samples]
    }

    pub fn left_channel(&self, c: usize) -> &[f32] {
        &self.left_context[c * self.context_samples..(c + 1) * self.context_samples]
    }

    pub fn right_channel(&self, c: usize) -> &[f32] {
        &self.right_context[c * self.context_samples..(c + 1) * self.context_samples]
    }
}
