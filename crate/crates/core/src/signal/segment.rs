use super::{MontageRecording, MontageSequence, PipelineConfig, NUM_MONTAGES};
use crate::error::Result;

pub fn sequence_id(patient_id: &str, window: usize) -> String {
    format!("{patient_id}-{window:05}")
}

/// Cut a montage recording into consecutive non-overlapping windows.
///
/// A trailing remainder shorter than one window is dropped. Context blocks
/// are copied from the neighbouring samples when they lie entirely inside
/// the recording; otherwise they are zero-filled and flagged invalid.
pub fn segment(rec: &MontageRecording, cfg: &PipelineConfig) -> Result<Vec<MontageSequence>> {
    cfg.validate_for(rec.sample_rate_hz)?;
    let w = cfg.window_samples(rec.sample_rate_hz);
    let c = cfg.context_samples(rec.sample_rate_hz);
    let len = rec.len();
    let count = len / w;

    let copy = |start: usize, n: usize| -> Vec<f32> {
        let mut out = Vec::with_capacity(NUM_MONTAGES * n);
        for ch in &rec.montages {
            out.extend_from_slice(&ch[start..start + n]);
        }
        out
    };

    let seqs = (0..count)
        .map(|j| {
            let start = j * w;
            let end = start + w;
            let left_valid = start >= c;
            let right_valid = end + c <= len;
            MontageSequence {
                sequence_id: sequence_id(&rec.patient_id, j),
                patient_id: rec.patient_id.clone(),
                sample_rate_hz: rec.sample_rate_hz,
                window_samples: w,
                context_samples: c,
                core: copy(start, w),
                left_context: if left_valid {
                    copy(start - c, c)
                } else {
                    vec![0.0; NUM_MONTAGES * c]
                },
                right_context: if right_valid {
                    copy(end, c)
                } else {
                    vec![0.0; NUM_MONTAGES * c]
                },
                left_valid,
                right_valid,
            }
        })
        .collect();
    Ok(seqs)
}
