//! On-disk formats: JSON headers next to little-endian `f32` payloads.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MontageSequence, RawRecording, ELECTRODES, NUM_MONTAGES};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const RECORDING_SUFFIX: &str = ".rec.json";
pub const SEQUENCE_MANIFEST: &str = "sequences.json";
pub const SEQUENCE_BLOB: &str = "sequences.f32";

pub fn f32s_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_to_f32s(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Schema(format!(
            "payload length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Write via a temporary sibling and rename, so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub schema_version: u32,
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub samples: usize,
    /// Payload file name, relative to the header.
    pub payload: String,
}

/// Writes `<stem>.rec.json` and `<stem>.rec.f32` (channel-major payload).
pub fn write_recording(dir: &Path, stem: &str, rec: &RawRecording) -> Result<PathBuf> {
    let payload = format!("{stem}.rec.f32");
    let header = RecordingHeader {
        schema_version: SCHEMA_VERSION,
        patient_id: rec.patient_id.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        channels: ELECTRODES.iter().map(|s| s.to_string()).collect(),
        samples: rec.len(),
        payload: payload.clone(),
    };
    let mut bytes = Vec::with_capacity(rec.len() * ELECTRODES.len() * 4);
    for ch in rec.channels() {
        bytes.extend(f32s_to_bytes(ch));
    }
    write_atomic(&dir.join(&payload), &bytes)?;
    let path = dir.join(format!("{stem}{RECORDING_SUFFIX}"));
    write_json(&path, &header)?;
    Ok(path)
}

pub fn read_recording(header_path: &Path) -> Result<RawRecording> {
    let header: RecordingHeader = read_json(header_path)?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let payload_path = dir.join(&header.payload);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let values = bytes_to_f32s(&bytes)?;
    let n = header.samples;
    if values.len() != n * header.channels.len() {
        return Err(Error::Schema(format!(
            "{}: payload has {} values, header declares {} x {}",
            payload_path.display(),
            values.len(),
            header.channels.len(),
            n
        )));
    }
    let named = header
        .channels
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), values[i * n..(i + 1) * n].to_vec()))
        .collect();
    RawRecording::from_named(header.patient_id, header.sample_rate_hz, named)
}

/// Recording headers in a directory, sorted by file name.
pub fn list_recordings(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(RECORDING_SUFFIX))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub sequence_id: String,
    pub patient_id: String,
    pub sample_rate_hz: f64,
    pub window_samples: usize,
    pub context_samples: usize,
    pub left_valid: bool,
    pub right_valid: bool,
    /// Byte offset of the sequence's block in the blob.
    pub offset: u64,
}

impl SequenceEntry {
    /// Bytes occupied by left context, core and right context.
    pub fn byte_len(&self) -> u64 {
        (NUM_MONTAGES * (self.window_samples + 2 * self.context_samples) * 4) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub schema_version: u32,
    pub channels: Vec<String>,
    pub sequences: Vec<SequenceEntry>,
}

/// Write sequences as `sequences.json` plus `sequences.f32`; each block is
/// left context, core, right context, all channel-major.
pub fn write_sequences(dir: &Path, seqs: &[MontageSequence]) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(seqs.len());
    for s in seqs {
        entries.push(SequenceEntry {
            sequence_id: s.sequence_id.clone(),
            patient_id: s.patient_id.clone(),
            sample_rate_hz: s.sample_rate_hz,
            window_samples: s.window_samples,
            context_samples: s.context_samples,
            left_valid: s.left_valid,
            right_valid: s.right_valid,
            offset: blob.len() as u64,
        });
        blob.extend(f32s_to_bytes(&s.left_context));
        blob.extend(f32s_to_bytes(&s.core));
        blob.extend(f32s_to_bytes(&s.right_context));
    }
    write_atomic(&dir.join(SEQUENCE_BLOB), &blob)?;
    write_json(
        &dir.join(SEQUENCE_MANIFEST),
        &SequenceManifest {
            schema_version: SCHEMA_VERSION,
            channels: super::montage_names(),
            sequences: entries,
        },
    )
}

fn decode_block(entry: &SequenceEntry, bytes: &[u8]) -> Result<MontageSequence> {
    let values = bytes_to_f32s(bytes)?;
    let ctx = NUM_MONTAGES * entry.context_samples;
    let core = NUM_MONTAGES * entry.window_samples;
    if values.len() != 2 * ctx + core {
        return Err(Error::Schema(format!(
            "sequence {} block has {} values",
            entry.sequence_id,
            values.len()
        )));
    }
    Ok(MontageSequence {
        sequence_id: entry.sequence_id.clone(),
        patient_id: entry.patient_id.clone(),
        sample_rate_hz: entry.sample_rate_hz,
        window_samples: entry.window_samples,
        context_samples: entry.context_samples,
        left_context: values[..ctx].to_vec(),
        core: values[ctx..ctx + core].to_vec(),
        right_context: values[ctx + core..].to_vec(),
        left_valid: entry.left_valid,
        right_valid: entry.right_valid,
    })
}

pub fn read_sequence_manifest(dir: &Path) -> Result<SequenceManifest> {
    read_json(&dir.join(SEQUENCE_MANIFEST))
}

pub fn read_sequences(dir: &Path) -> Result<Vec<MontageSequence>> {
    let manifest = read_sequence_manifest(dir)?;
    let blob_path = dir.join(SEQUENCE_BLOB);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    manifest
        .sequences
        .iter()
        .map(|e| {
            let start = e.offset as usize;
            let end = start + e.byte_len() as usize;
            let bytes = blob
                .get(start..end)
                .ok_or_else(|| Error::Schema(format!("sequence {} lies outside the blob", e.sequence_id)))?;
            decode_block(e, bytes)
        })
        .collect()
}

/// Raw stored bytes of one sequence block (left context, core, right context).
pub fn read_sequence_bytes(dir: &Path, entry: &SequenceEntry) -> Result<Vec<u8>> {
    use std::io::{Read, Seek, SeekFrom};
    let blob_path = dir.join(SEQUENCE_BLOB);
    let mut f = fs::File::open(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    f.seek(SeekFrom::Start(entry.offset))
        .map_err(|e| Error::io(&blob_path, e))?;
    let mut buf = vec![0u8; entry.byte_len() as usize];
    f.read_exact(&mut buf).map_err(|e| Error::io(&blob_path, e))?;
    Ok(buf)
}
