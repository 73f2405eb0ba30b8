//! Recording file layout (all integers and floats little-endian):
//!
//! ```text
//! "BRVR"  u32 version  u32 header_len  header (UTF-8, key=value lines)
//! events  n_events × { f64 onset_s, f64 duration_s, u8 kind }
//! labels  n_samples × u8              (0 LEFT, 1 RIGHT, 2 IDLE)
//! samples n_channels × n_samples × f32 (channel-major)
//! ```

use super::{ArtifactEvent, ArtifactKind, Recording};
use crate::labels::ClassLabel;
use crate::transport::StreamHeader;
use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::path::Path;

pub const RECORDING_MAGIC: &[u8; 4] = b"BRVR";
pub const RECORDING_VERSION: u32 = 1;

const EVENT_BYTES: usize = 17;

#[derive(Debug, thiserror::Error)]
pub enum RecordingFileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("structural error: {0}")]
    Structural(String),
}

fn parse_err(offset: usize, msg: impl Into<String>) -> RecordingFileError {
    RecordingFileError::Parse { offset, msg: msg.into() }
}

pub fn write_recording(rec: &Recording) -> Result<Vec<u8>, RecordingFileError> {
    for (k, v) in [("name", &rec.header.name), ("source_id", &rec.header.source_id)] {
        if v.contains('\n') || v.contains('\r') {
            return Err(RecordingFileError::Structural(format!("{k} contains a line break")));
        }
    }
    let header = format!(
        "layout=f32le-channel-major\nname={}\nsource_id={}\nn_channels={}\nfs={:?}\nt0={:?}\nn_samples={}\nn_events={}\n",
        rec.header.name,
        rec.header.source_id,
        rec.header.n_channels,
        rec.header.fs_nominal,
        rec.t0,
        rec.n_samples(),
        rec.event_log.len()
    );
    let n = rec.n_samples();
    let mut out = Vec::with_capacity(12 + header.len() + rec.event_log.len() * EVENT_BYTES + n + 4 * n * rec.n_channels());
    out.extend_from_slice(RECORDING_MAGIC);
    out.write_u32::<LittleEndian>(RECORDING_VERSION).unwrap();
    out.write_u32::<LittleEndian>(header.len() as u32).unwrap();
    out.extend_from_slice(header.as_bytes());
    for e in &rec.event_log {
        out.write_f64::<LittleEndian>(e.timestamp).unwrap();
        out.write_f64::<LittleEndian>(e.duration).unwrap();
        out.push(e.kind.code());
    }
    out.extend(rec.labels.iter().map(|l| l.index() as u8));
    for ch in 0..rec.n_channels() {
        for t in 0..n {
            out.write_f32::<LittleEndian>(rec.samples[(ch, t)]).unwrap();
        }
    }
    Ok(out)
}

pub fn read_recording(bytes: &[u8]) -> Result<Recording, RecordingFileError> {
    if bytes.len() < 12 {
        return Err(parse_err(bytes.len(), "truncated preamble"));
    }
    if &bytes[..4] != RECORDING_MAGIC {
        return Err(parse_err(0, "bad magic"));
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != RECORDING_VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let header_len = LittleEndian::read_u32(&bytes[8..12]) as usize;
    let mut pos = 12;
    let header_bytes = bytes
        .get(pos..pos + header_len)
        .ok_or_else(|| parse_err(bytes.len(), "truncated header"))?;
    let header_text = std::str::from_utf8(header_bytes)
        .map_err(|e| parse_err(pos + e.valid_up_to(), "header is not UTF-8"))?;
    let mut fields = HashMap::new();
    let mut line_off = pos;
    for line in header_text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches('\n');
        if !trimmed.is_empty() {
            let (k, v) = trimmed
                .split_once('=')
                .ok_or_else(|| parse_err(line_off, format!("malformed header line `{trimmed}`")))?;
            fields.insert(k.to_string(), (v.to_string(), line_off));
        }
        line_off += line.len();
    }
    let get = |k: &str| -> Result<&(String, usize), RecordingFileError> {
        fields.get(k).ok_or_else(|| parse_err(pos, format!("missing header key `{k}`")))
    };
    fn num<T: std::str::FromStr>(k: &str, e: &(String, usize)) -> Result<T, RecordingFileError> {
        e.0.parse().map_err(|_| parse_err(e.1, format!("bad value for `{k}`: `{}`", e.0)))
    }
    let n_channels: usize = num("n_channels", get("n_channels")?)?;
    let fs: f64 = num("fs", get("fs")?)?;
    let t0: f64 = num("t0", get("t0")?)?;
    let n_samples: usize = num("n_samples", get("n_samples")?)?;
    let n_events: usize = num("n_events", get("n_events")?)?;
    let name = get("name")?.0.clone();
    let source_id = get("source_id")?.0.clone();
    pos += header_len;

    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let e = bytes
            .get(pos..pos + EVENT_BYTES)
            .ok_or_else(|| parse_err(bytes.len(), "truncated event log"))?;
        let kind = ArtifactKind::from_code(e[16]).ok_or_else(|| parse_err(pos + 16, format!("unknown event kind {}", e[16])))?;
        events.push(ArtifactEvent {
            timestamp: LittleEndian::read_f64(&e[..8]),
            duration: LittleEndian::read_f64(&e[8..16]),
            kind,
        });
        pos += EVENT_BYTES;
    }

    let label_bytes = bytes
        .get(pos..pos + n_samples)
        .ok_or_else(|| parse_err(bytes.len(), "truncated label block"))?;
    let mut labels = Vec::with_capacity(n_samples);
    for (i, &b) in label_bytes.iter().enumerate() {
        labels.push(ClassLabel::from_index(b as usize).ok_or_else(|| parse_err(pos + i, format!("bad label code {b}")))?);
    }
    pos += n_samples;

    let body = &bytes[pos..];
    let row_bytes = 4 * n_samples;
    if row_bytes == 0 {
        if !body.is_empty() {
            return Err(RecordingFileError::Structural("sample bytes present for an empty recording".into()));
        }
    } else if body.len() % row_bytes != 0 {
        return Err(parse_err(
            pos + body.len() / row_bytes * row_bytes,
            format!("sample block of {} bytes is not a whole number of {}-byte rows", body.len(), row_bytes),
        ));
    } else if body.len() / row_bytes != n_channels {
        return Err(RecordingFileError::Structural(format!(
            "header declares {n_channels} channels but the sample block holds {} rows",
            body.len() / row_bytes
        )));
    }
    let mut samples = DMatrix::<f32>::zeros(n_channels, n_samples);
    for ch in 0..n_channels {
        for t in 0..n_samples {
            let off = (ch * n_samples + t) * 4;
            samples[(ch, t)] = LittleEndian::read_f32(&body[off..off + 4]);
        }
    }

    let header = StreamHeader { name, n_channels, fs_nominal: fs, source_id };
    Recording::new(header, t0, samples, labels, events).map_err(|e| RecordingFileError::Structural(e.to_string()))
}

pub fn save_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<(), RecordingFileError> {
    let path = path.as_ref();
    let bytes = write_recording(rec)?;
    std::fs::write(path, bytes).map_err(|source| RecordingFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<Recording, RecordingFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| RecordingFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_recording(&bytes)
}
