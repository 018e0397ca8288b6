//! `HSM1` checkpoint container.
//!
//! Layout: magic `HSM1`, u32 version, u64 header length, UTF-8 JSON header
//! (spec, class names, metadata, tensor table), raw little-endian payloads in
//! table order, trailing CRC32 over every preceding byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, StoredTensor, TensorData};
use super::spec::NetworkSpec;
use crate::compress::quant::QuantParams;

pub const MAGIC: &[u8; 4] = b"HSM1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O failed: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("unsupported checkpoint: {0}")]
    VersionMismatch(String),
    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    Running,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    group: Group,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quant: Option<QuantParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    class_names: Vec<String>,
    metadata: serde_json::Value,
    tensors: Vec<Entry>,
}

fn append_payload(buf: &mut Vec<u8>, t: &StoredTensor) {
    match &t.data {
        TensorData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        TensorData::Q8 { values, .. } => buf.extend(values.iter().map(|&q| q as u8)),
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    let groups = [(Group::Param, &model.params), (Group::Running, &model.running_stats)];
    for (group, map) in groups {
        for (name, t) in map {
            let offset = payload.len() as u64;
            append_payload(&mut payload, t);
            entries.push(Entry {
                name: name.clone(),
                group,
                dtype: t.dtype_name().to_string(),
                shape: t.shape.clone(),
                offset,
                nbytes: payload.len() as u64 - offset,
                quant: t.quant().copied(),
            });
        }
    }
    let header = Header {
        spec: model.spec.clone(),
        class_names: model.class_names.clone(),
        metadata: model.metadata.clone(),
        tensors: entries,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::VersionMismatch("bad magic, not an HSM1 checkpoint".into()));
    }
    if bytes.len() < 20 {
        return Err(CheckpointError::Malformed("file shorter than fixed header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch(format!("version {version}, expected {VERSION}")));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body_end)
        .ok_or_else(|| CheckpointError::Malformed("header length exceeds file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
    let payload = &bytes[header_end..body_end];

    let mut params = BTreeMap::new();
    let mut running = BTreeMap::new();
    for e in header.tensors {
        let start = e.offset as usize;
        let end = start
            .checked_add(e.nbytes as usize)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("{}: payload out of bounds", e.name)))?;
        let raw = &payload[start..end];
        let numel: usize = e.shape.iter().product();
        let data = match (e.dtype.as_str(), e.quant) {
            ("f32", None) if raw.len() == numel * 4 => TensorData::F32(
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            ("q8", Some(quant)) if raw.len() == numel => {
                TensorData::Q8 { values: raw.iter().map(|&b| b as i8).collect(), quant }
            }
            (dtype, _) => {
                return Err(CheckpointError::Malformed(format!(
                    "{}: dtype {dtype} with {} bytes for {numel} values",
                    e.name,
                    raw.len()
                )))
            }
        };
        let t = StoredTensor { shape: e.shape, data };
        match e.group {
            Group::Param => params.insert(e.name, t),
            Group::Running => running.insert(e.name, t),
        };
    }
    let model = Model {
        spec: header.spec,
        params,
        running_stats: running,
        class_names: header.class_names,
        metadata: header.metadata,
    };
    model.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::spec::{build_student, ArchConfig};

    fn model() -> Model {
        Model::init(build_student(&ArchConfig::student()).unwrap(), 11).unwrap()
    }

    #[test]
    fn bytes_round_trip_and_are_stable() {
        let m = model();
        let a = to_bytes(&m);
        let back = from_bytes(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), a);
    }

    #[test]
    fn wrong_magic_is_version_mismatch() {
        let mut b = to_bytes(&model());
        b[0] = b'X';
        assert!(matches!(from_bytes(&b), Err(CheckpointError::VersionMismatch(_))));
    }

    #[test]
    fn future_version_rejected() {
        let mut b = to_bytes(&model());
        b[4] = 9;
        assert!(matches!(from_bytes(&b), Err(CheckpointError::VersionMismatch(_))));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut b = to_bytes(&model());
        let i = b.len() - 100;
        b[i] ^= 0x40;
        assert!(matches!(from_bytes(&b), Err(CheckpointError::ChecksumMismatch { .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let b = to_bytes(&model());
        assert!(from_bytes(&b[..10]).is_err());
        assert!(from_bytes(&b[..b.len() / 2]).is_err());
    }

    #[test]
    fn quantized_tensor_round_trips() {
        let mut m = model();
        let qp = QuantParams::from_range(-1.0, 1.0, -128, 127).unwrap();
        let t = m.params.get_mut("head.fc2.bias").unwrap();
        t.data = TensorData::Q8 { values: vec![-128, 0, 5, 127], quant: qp };
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back.params["head.fc2.bias"], m.params["head.fc2.bias"]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hsm");
        let m = model();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(load_model(dir.path().join("missing.hsm")), Err(CheckpointError::IoFailure(_))));
    }
}
