//! Single-file model bundle.
//!
//! Layout (little-endian): magic `BRVM`, `u32` version, `u32` section
//! count, then one table entry per section (`[u8; 4]` tag, `u64` offset from
//! the start of the file, `u64` length), then the bincode payloads.

use crate::ensemble::{ArtifactStage, Ensemble, EnsembleConfig};
use crate::ModelError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::Path;

pub const BUNDLE_MAGIC: &[u8; 4] = b"BRVM";
pub const BUNDLE_VERSION: u32 = 1;

const TAGS: [&[u8; 4]; 7] = [b"CONF", b"ARTF", b"CSP_", b"LSTM", b"CNN_", b"RF__", b"META"];

fn encode<T: Serialize>(v: &T) -> Result<Vec<u8>, ModelError> {
    bincode::serialize(v).map_err(|e| ModelError::Bundle(format!("encode: {e}")))
}

fn decode<T: DeserializeOwned>(sections: &BTreeMap<[u8; 4], Vec<u8>>, tag: &[u8; 4]) -> Result<T, ModelError> {
    let bytes = sections
        .get(tag)
        .ok_or_else(|| ModelError::Bundle(format!("missing section {}", String::from_utf8_lossy(tag))))?;
    bincode::deserialize(bytes).map_err(|e| ModelError::Bundle(format!("section {}: {e}", String::from_utf8_lossy(tag))))
}

pub fn bundle_to_bytes(ens: &Ensemble) -> Result<Vec<u8>, ModelError> {
    ens.validate()?;
    let payloads = [
        encode(&ens.config)?,
        encode(&ens.artifact)?,
        encode(&ens.csp)?,
        encode(&ens.lstm)?,
        encode(&ens.cnn)?,
        encode(&ens.forest)?,
        encode(&ens.meta)?,
    ];
    let header_len = 12 + TAGS.len() * 20;
    let mut out = Vec::with_capacity(header_len + payloads.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(BUNDLE_MAGIC);
    out.write_u32::<LittleEndian>(BUNDLE_VERSION)?;
    out.write_u32::<LittleEndian>(TAGS.len() as u32)?;
    let mut offset = header_len as u64;
    for (tag, p) in TAGS.iter().zip(&payloads) {
        out.extend_from_slice(*tag);
        out.write_u64::<LittleEndian>(offset)?;
        out.write_u64::<LittleEndian>(p.len() as u64)?;
        offset += p.len() as u64;
    }
    for p in &payloads {
        out.write_all(p)?;
    }
    Ok(out)
}

pub fn bundle_from_bytes(bytes: &[u8]) -> Result<Ensemble, ModelError> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| ModelError::Bundle("file too short for magic".into()))?;
    if &magic != BUNDLE_MAGIC {
        return Err(ModelError::Bundle(format!("bad magic {magic:02x?}, expected \"BRVM\"")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| ModelError::Bundle("truncated header".into()))?;
    if version != BUNDLE_VERSION {
        return Err(ModelError::BundleVersion { found: version, expected: BUNDLE_VERSION });
    }
    let count = r.read_u32::<LittleEndian>().map_err(|_| ModelError::Bundle("truncated header".into()))?;
    let mut sections = BTreeMap::new();
    for _ in 0..count {
        let mut tag = [0u8; 4];
        r.read_exact(&mut tag).map_err(|_| ModelError::Bundle("truncated section table".into()))?;
        let offset = r.read_u64::<LittleEndian>().map_err(|_| ModelError::Bundle("truncated section table".into()))?;
        let len = r.read_u64::<LittleEndian>().map_err(|_| ModelError::Bundle("truncated section table".into()))?;
        let end = offset.checked_add(len).filter(|&e| e <= bytes.len() as u64).ok_or_else(|| {
            ModelError::Bundle(format!("section {} extends past end of file", String::from_utf8_lossy(&tag)))
        })?;
        sections.insert(tag, bytes[offset as usize..end as usize].to_vec());
    }
    let config: EnsembleConfig = decode(&sections, b"CONF")?;
    let artifact: ArtifactStage = decode(&sections, b"ARTF")?;
    let ens = Ensemble {
        config,
        artifact,
        csp: decode(&sections, b"CSP_")?,
        lstm: decode(&sections, b"LSTM")?,
        cnn: decode(&sections, b"CNN_")?,
        forest: decode(&sections, b"RF__")?,
        meta: decode(&sections, b"META")?,
    };
    ens.validate()?;
    Ok(ens)
}

pub fn save_bundle(ens: &Ensemble, path: &Path) -> Result<(), ModelError> {
    let bytes = bundle_to_bytes(ens)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<Ensemble, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Bundle(format!("{}: {e}", path.display())))?;
    bundle_from_bytes(&bytes)
}
