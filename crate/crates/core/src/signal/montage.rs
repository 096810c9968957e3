use super::{electrode_index, MontageGroup, MontageRecording, MontageSequence, RawRecording, NUM_MONTAGES};
use crate::error::Result;

/// Double-banana bipolar pairs `(anode, cathode)`: LL, LP, RP, RL chains of four.
pub const MONTAGE_PAIRS: [(&str, &str); NUM_MONTAGES] = [
    ("Fp1", "F7"),
    ("F7", "T3"),
    ("T3", "T5"),
    ("T5", "O1"),
    ("Fp1", "F3"),
    ("F3", "C3"),
    ("C3", "P3"),
    ("P3", "O1"),
    ("Fp2", "F4"),
    ("F4", "C4"),
    ("C4", "P4"),
    ("P4", "O2"),
    ("Fp2", "F8"),
    ("F8", "T4"),
    ("T4", "T6"),
    ("T6", "O2"),
];

pub fn montage_name(i: usize) -> String {
    let (a, b) = MONTAGE_PAIRS[i];
    format!("{a}-{b}")
}

pub fn montage_names() -> Vec<String> {
    (0..NUM_MONTAGES).map(montage_name).collect()
}

pub fn montage_group(i: usize) -> MontageGroup {
    match i / 4 {
        0 => MontageGroup::LeftLateral,
        1 => MontageGroup::LeftPosterior,
        2 => MontageGroup::RightPosterior,
        _ => MontageGroup::RightLateral,
    }
}

/// Montage index that mirrors `i` across the midline (LL<->RL, LP<->RP).
pub fn mirror_montage(i: usize) -> usize {
    let pos = i % 4;
    match i / 4 {
        0 => 12 + pos,
        1 => 8 + pos,
        2 => 4 + pos,
        _ => pos,
    }
}

pub fn compute_montages(rec: &RawRecording) -> Result<MontageRecording> {
    let montages = MONTAGE_PAIRS
        .iter()
        .map(|(a, b)| {
            // RawRecording guarantees every electrode is present.
            let xa = &rec.channels()[electrode_index(a).expect("pair table electrode")];
            let xb = &rec.channels()[electrode_index(b).expect("pair table electrode")];
            xa.iter().zip(xb).map(|(p, q)| p - q).collect()
        })
        .collect();
    Ok(MontageRecording {
        patient_id: rec.patient_id.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        montages,
    })
}

fn flip_block(data: &[f32], len: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for c in 0..NUM_MONTAGES {
        let m = mirror_montage(c);
        out[m * len..(m + 1) * len].copy_from_slice(&data[c * len..(c + 1) * len]);
    }
    out
}

/// Mirror a sequence across the midline. Applying it twice is the identity.
pub fn flip_left_right(seq: &MontageSequence) -> MontageSequence {
    MontageSequence {
        core: flip_block(&seq.core, seq.window_samples),
        left_context: flip_block(&seq.left_context, seq.context_samples),
        right_context: flip_block(&seq.right_context, seq.context_samples),
        ..seq.clone()
    }
}

/// Lateral electrode swaps (Fz, Cz, Pz stay put).
pub const LATERAL_SWAPS: [(&str, &str); 8] = [
    ("Fp1", "Fp2"),
    ("F3", "F4"),
    ("F7", "F8"),
    ("T3", "T4"),
    ("T5", "T6"),
    ("C3", "C4"),
    ("P3", "P4"),
    ("O1", "O2"),
];

/// Electrode-level mirror: swaps homologous left/right electrodes.
pub fn flip_electrodes(rec: &RawRecording) -> RawRecording {
    let mut channels = rec.channels().to_vec();
    for (l, r) in LATERAL_SWAPS {
        channels.swap(
            electrode_index(l).expect("known electrode"),
            electrode_index(r).expect("known electrode"),
        );
    }
    RawRecording::new(rec.patient_id.clone(), rec.sample_rate_hz, channels)
        .expect("swapping channels keeps the recording valid")
}
