//! Binary tensor container shared by checkpoints and vector stores.
//!
//! Layout: 4 magic bytes, format version (u32 LE), header length (u32 LE),
//! a UTF-8 JSON header carrying the tensor manifest, then the raw
//! little-endian tensor blobs in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lwr_core::masm::{MasmParameters, ModelConfig, Tensor, Tower};
use lwr_core::serving::VectorStore;

use crate::error::{LwrError, Result};
use crate::formats::{read_bytes, write_bytes, Provenance};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MASM";
pub const STORE_MAGIC: [u8; 4] = *b"MAVS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    /// Byte offset from the start of the blob section.
    pub offset: usize,
}

impl ManifestEntry {
    pub fn byte_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    /// Hex FNV-1a hash of the vocabulary the embedding rows index.
    pub vocab_hash: String,
    pub tensors: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub side: Tower,
    pub fingerprint: String,
    pub h: usize,
    pub d: usize,
    pub ids: Vec<String>,
    pub tensors: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn vocab_hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn frame(magic: [u8; 4], header: &[u8], blobs: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + header.len() + blobs.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(blobs);
    out
}

/// Splits a container into (header JSON, blob section), checking the frame.
fn unframe<'a>(path: &Path, magic: [u8; 4], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 12 {
        return Err(LwrError::format(path, "file shorter than the container preamble"));
    }
    if bytes[..4] != magic {
        return Err(LwrError::format(
            path,
            format!("bad magic {:?}, expected {:?}", &bytes[..4], std::str::from_utf8(&magic).unwrap_or("?")),
        ));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(LwrError::format(path, format!("unsupported format version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(LwrError::format(path, "header runs past end of file"));
    }
    Ok(body.split_at(header_len))
}

fn parse_header<T: serde::de::DeserializeOwned>(path: &Path, header: &[u8]) -> Result<T> {
    serde_json::from_slice(header).map_err(|source| LwrError::Json {
        path: path.into(),
        line: source.line(),
        source,
    })
}

/// Checks that manifest entries tile the blob section exactly, in order.
fn check_manifest(path: &Path, entries: &[ManifestEntry], blob_len: usize) -> Result<()> {
    let mut cursor = 0;
    for e in entries {
        if e.offset != cursor {
            return Err(LwrError::format(
                path,
                format!("tensor `{}` at offset {} but expected {cursor}", e.name, e.offset),
            ));
        }
        cursor += e.byte_len();
    }
    if cursor != blob_len {
        return Err(LwrError::format(
            path,
            format!("manifest covers {cursor} bytes but blob section holds {blob_len}"),
        ));
    }
    Ok(())
}

pub fn encode_checkpoint(params: &MasmParameters, vocab_hash: u64, provenance: Option<Provenance>) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut blobs = Vec::with_capacity(params.param_count() * 8);
    for (name, t) in params.named_tensors() {
        tensors.push(ManifestEntry {
            name: name.into(),
            shape: t.shape.clone(),
            dtype: Dtype::F64,
            offset: blobs.len(),
        });
        for x in &t.data {
            blobs.extend_from_slice(&x.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        config: params.config.clone(),
        vocab_hash: vocab_hash_hex(vocab_hash),
        tensors,
        provenance,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    frame(CHECKPOINT_MAGIC, &header, &blobs)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<(CheckpointHeader, MasmParameters)> {
    let (header, blobs) = unframe(path, CHECKPOINT_MAGIC, bytes)?;
    let header: CheckpointHeader = parse_header(path, header)?;
    check_manifest(path, &header.tensors, blobs.len())?;
    let mut named = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let raw = &blobs[e.offset..e.offset + e.byte_len()];
        let data: Vec<f64> = match e.dtype {
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        };
        named.push((
            e.name.clone(),
            Tensor {
                shape: e.shape.clone(),
                data,
            },
        ));
    }
    let params = MasmParameters::from_tensors(&header.config, named)?;
    Ok((header, params))
}

/// A loaded checkpoint with the fingerprint of its exact bytes.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: MasmParameters,
    pub fingerprint: String,
}

impl Checkpoint {
    pub fn vocab_hash(&self) -> &str {
        &self.header.vocab_hash
    }

    /// Refuses a vocabulary other than the one the checkpoint was trained on.
    pub fn check_vocab(&self, vocab_hash: u64) -> Result<()> {
        let found = vocab_hash_hex(vocab_hash);
        if found != self.header.vocab_hash {
            return Err(lwr_core::Error::Fingerprint {
                expected: self.header.vocab_hash.clone(),
                found,
            }
            .into());
        }
        Ok(())
    }
}

/// Writes a checkpoint and returns its fingerprint.
pub fn save_checkpoint(
    path: &Path,
    params: &MasmParameters,
    vocab_hash: u64,
    provenance: Option<Provenance>,
) -> Result<String> {
    let bytes = encode_checkpoint(params, vocab_hash, provenance);
    write_bytes(path, &bytes)?;
    Ok(fingerprint(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_bytes(path)?;
    let (header, params) = decode_checkpoint(path, &bytes)?;
    Ok(Checkpoint {
        header,
        params,
        fingerprint: fingerprint(&bytes),
    })
}

pub fn encode_store(store: &VectorStore, provenance: Option<Provenance>) -> Vec<u8> {
    let tensors = vec![ManifestEntry {
        name: "vectors".into(),
        shape: vec![store.len(), store.h, store.d],
        dtype: Dtype::F32,
        offset: 0,
    }];
    let mut blobs = Vec::with_capacity(store.raw().len() * 4);
    for x in store.raw() {
        blobs.extend_from_slice(&x.to_le_bytes());
    }
    let header = StoreHeader {
        side: store.side,
        fingerprint: store.fingerprint.clone(),
        h: store.h,
        d: store.d,
        ids: store.ids().to_vec(),
        tensors,
        provenance,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    frame(STORE_MAGIC, &header, &blobs)
}

pub fn decode_store(path: &Path, bytes: &[u8]) -> Result<VectorStore> {
    let (header, blobs) = unframe(path, STORE_MAGIC, bytes)?;
    let header: StoreHeader = parse_header(path, header)?;
    check_manifest(path, &header.tensors, blobs.len())?;
    let expected = vec![header.ids.len(), header.h, header.d];
    match header.tensors.as_slice() {
        [e] if e.name == "vectors" && e.dtype == Dtype::F32 && e.shape == expected => {}
        _ => {
            return Err(LwrError::format(
                path,
                format!("store must hold one f32 `vectors` tensor of shape {expected:?}"),
            ))
        }
    }
    let values: Vec<f32> = blobs
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut store = VectorStore::new(header.side, header.fingerprint, header.h, header.d);
    let stride = header.h * header.d;
    for (i, id) in header.ids.into_iter().enumerate() {
        store.insert(id, &values[i * stride..(i + 1) * stride])?;
    }
    Ok(store)
}

pub fn save_store(path: &Path, store: &VectorStore, provenance: Option<Provenance>) -> Result<()> {
    write_bytes(path, &encode_store(store, provenance))
}

pub fn load_store(path: &Path) -> Result<VectorStore> {
    decode_store(path, &read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MasmParameters {
        let config = ModelConfig {
            d: 4,
            h: 2,
            w: 3,
            vocab_size: 9,
            query_max_len: 5,
            title_max_len: 7,
            l1_normalize_aspects: false,
        };
        MasmParameters::init(&config, 3).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = params();
        let bytes = encode_checkpoint(&p, 0xabc, None);
        assert_eq!(&bytes[..4], b"MASM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        let (header, back) = decode_checkpoint(Path::new("mem"), &bytes).unwrap();
        assert_eq!(header.vocab_hash, "0000000000000abc");
        assert_eq!(back, p);
        assert_eq!(encode_checkpoint(&back, 0xabc, None), bytes);
    }

    #[test]
    fn manifest_offsets_follow_tensor_order() {
        let p = params();
        let bytes = encode_checkpoint(&p, 1, None);
        let (header, _) = decode_checkpoint(Path::new("mem"), &bytes).unwrap();
        let names: Vec<&str> = header.tensors.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, MasmParameters::tensor_names());
        let mut offset = 0;
        for e in &header.tensors {
            assert_eq!(e.offset, offset);
            offset += e.byte_len();
        }
        assert_eq!(offset, p.param_count() * 8);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = encode_checkpoint(&params(), 1, None);
        let path = Path::new("mem");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(path, &bad).is_err());

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_checkpoint(path, &bad).is_err());

        assert!(decode_checkpoint(path, &bytes[..bytes.len() - 8]).is_err());
        assert!(decode_checkpoint(path, &bytes[..6]).is_err());
    }

    #[test]
    fn fingerprint_tracks_bytes() {
        let a = encode_checkpoint(&params(), 1, None);
        let b = encode_checkpoint(&params(), 2, None);
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }

    #[test]
    fn store_round_trip() {
        let mut store = VectorStore::new(Tower::Product, "ff", 2, 3);
        store.insert("p1", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        store.insert("p0", &[-1.0, 0.5, 0.0, 0.25, 8.0, 1e-7]).unwrap();
        let bytes = encode_store(&store, None);
        assert_eq!(&bytes[..4], b"MAVS");
        let back = decode_store(Path::new("mem"), &bytes).unwrap();
        assert_eq!(back, store);
        assert!(decode_checkpoint(Path::new("mem"), &bytes).is_err());
    }

    #[test]
    fn empty_store_has_valid_header() {
        let store = VectorStore::new(Tower::Query, "00", 10, 64);
        let back = decode_store(Path::new("mem"), &encode_store(&store, None)).unwrap();
        assert!(back.is_empty());
        assert_eq!((back.h, back.d), (10, 64));
    }
}
