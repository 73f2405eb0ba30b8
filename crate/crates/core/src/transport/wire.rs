//! Byte framing for socket transport (little-endian):
//!
//! ```text
//! "BRV1"  u32 meta_len  meta (UTF-8 key=value lines: name, n_channels, fs, source_id)
//! frame*  u32 len  u64 seq  f64 t0  f32 samples[k × n_channels] (sample-major)
//! ```
//! `len` counts the bytes after the length field (16 + 4·k·n_channels).

use super::{Chunk, StreamHeader, TransportError};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use std::io::{ErrorKind, Read, Write};

pub const WIRE_MAGIC: &[u8; 4] = b"BRV1";
const MAX_META: u32 = 1 << 16;
const MAX_FRAME: u32 = 1 << 26;

pub fn write_preamble<W: Write>(w: &mut W, header: &StreamHeader) -> Result<(), TransportError> {
    header.validate()?;
    let meta = format!(
        "name={}\nn_channels={}\nfs={:?}\nsource_id={}\n",
        header.name, header.n_channels, header.fs_nominal, header.source_id
    );
    w.write_all(WIRE_MAGIC)?;
    w.write_u32::<LittleEndian>(meta.len() as u32)?;
    w.write_all(meta.as_bytes())?;
    Ok(())
}

pub fn read_preamble<R: Read>(r: &mut R) -> Result<StreamHeader, TransportError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WIRE_MAGIC {
        return Err(TransportError::Wire(format!("bad magic {magic:?}")));
    }
    let len = r.read_u32::<LittleEndian>()?;
    if len > MAX_META {
        return Err(TransportError::Wire(format!("metadata length {len} too large")));
    }
    let mut meta = vec![0u8; len as usize];
    r.read_exact(&mut meta)?;
    let text = String::from_utf8(meta).map_err(|_| TransportError::Wire("metadata is not UTF-8".into()))?;
    let mut name = None;
    let mut n_channels = None;
    let mut fs = None;
    let mut source_id = None;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| TransportError::Wire(format!("malformed metadata line `{line}`")))?;
        let bad = || TransportError::Wire(format!("bad value for {k}: `{v}`"));
        match k {
            "name" => name = Some(v.to_string()),
            "n_channels" => n_channels = Some(v.parse().map_err(|_| bad())?),
            "fs" => fs = Some(v.parse().map_err(|_| bad())?),
            "source_id" => source_id = Some(v.to_string()),
            _ => {}
        }
    }
    let missing = |k: &str| TransportError::Wire(format!("metadata missing `{k}`"));
    let header = StreamHeader {
        name: name.ok_or_else(|| missing("name"))?,
        n_channels: n_channels.ok_or_else(|| missing("n_channels"))?,
        fs_nominal: fs.ok_or_else(|| missing("fs"))?,
        source_id: source_id.ok_or_else(|| missing("source_id"))?,
    };
    header.validate()?;
    Ok(header)
}

pub fn write_frame<W: Write>(w: &mut W, chunk: &Chunk) -> Result<(), TransportError> {
    let ch = chunk.samples.nrows();
    let k = chunk.samples.ncols();
    let len = 16 + 4 * ch * k;
    let mut buf = Vec::with_capacity(4 + len);
    buf.write_u32::<LittleEndian>(len as u32)?;
    buf.write_u64::<LittleEndian>(chunk.seq)?;
    buf.write_f64::<LittleEndian>(chunk.t0)?;
    for t in 0..k {
        for c in 0..ch {
            buf.write_f32::<LittleEndian>(chunk.samples[(c, t)])?;
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R, n_channels: usize) -> Result<Option<Chunk>, TransportError> {
    let len = match r.read_u32::<LittleEndian>() {
        Ok(l) => l,
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if len < 16 || len > MAX_FRAME || (len - 16) as usize % (4 * n_channels) != 0 {
        return Err(TransportError::Wire(format!("bad frame length {len} for {n_channels} channels")));
    }
    let seq = r.read_u64::<LittleEndian>()?;
    let t0 = r.read_f64::<LittleEndian>()?;
    let k = (len - 16) as usize / (4 * n_channels);
    let mut samples = DMatrix::<f32>::zeros(n_channels, k);
    for t in 0..k {
        for c in 0..n_channels {
            samples[(c, t)] = r.read_f32::<LittleEndian>()?;
        }
    }
    Ok(Some(Chunk { t0, seq, samples }))
}
