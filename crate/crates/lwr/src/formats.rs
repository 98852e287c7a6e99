//! Text artifact formats: JSON documents, line-delimited JSON, vocabulary
//! files, histogram CSV and provenance sidecars.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lwr_core::clicksim::{ProductId, QueryId};
use lwr_core::corpus::Vocabulary;
use lwr_core::pipeline::RelevanceType;

use crate::error::{LwrError, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LwrError::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written artifact.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LwrError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| LwrError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LwrError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| LwrError::Json {
        path: path.into(),
        line: source.line(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory values always serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| LwrError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LwrError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| LwrError::Json {
            path: path.into(),
            line: i + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn jsonl_bytes<'a, T: Serialize + 'a>(rows: impl IntoIterator<Item = &'a T>) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut w = BufWriter::new(&mut out);
        for row in rows {
            serde_json::to_writer(&mut w, row).expect("in-memory values always serialize");
            w.write_all(b"\n").expect("writing to memory");
        }
    }
    out
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    write_bytes(path, &jsonl_bytes(rows))
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| LwrError::format(path, "vocabulary is not UTF-8"))?;
    Ok(Vocabulary::from_text(&text)?)
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_bytes(path, vocab.to_text().as_bytes())
}

/// One row of the level-wise dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwrRow {
    pub query_id: QueryId,
    pub product_id: ProductId,
    pub query_tokens: Vec<String>,
    pub title_tokens: Vec<String>,
    #[serde(rename = "type")]
    pub rtype: RelevanceType,
}

/// One row of an annotated-pair file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<QueryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<ProductId>,
    pub query_tokens: Vec<String>,
    pub title_tokens: Vec<String>,
    pub label: u8,
}

/// One row of a click-pair file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRow {
    pub query_tokens: Vec<String>,
    pub clicked_tokens: Vec<String>,
    pub unclicked_tokens: Vec<String>,
}

/// One item to export into a vector store. Either `tokens` or `text` is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ItemRow {
    pub fn tokens(&self) -> Vec<String> {
        match (&self.tokens, &self.text) {
            (Some(t), _) => t.clone(),
            (None, Some(text)) => lwr_core::corpus::tokenize(text),
            (None, None) => Vec::new(),
        }
    }
}

/// Config and seed that produced an artifact, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn write_sidecar(path: &Path, provenance: &Provenance) -> Result<()> {
    write_json(&sidecar_path(path), provenance)
}
