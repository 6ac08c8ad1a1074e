//! Binary model files.
//!
//! Layout, all little-endian: the magic bytes `DCAL`, a `u32` format version,
//! `p`, `q`, `r`, `d`, the entity count and the relation row count as `u32`,
//! then the entity matrix and the relation matrix as row-major `f64`. The
//! vocabulary is stored next to the model as JSON.

use std::fs;
use std::path::{Path, PathBuf};

use crate::algebra::Signature;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, Matrix};

pub const MAGIC: &[u8; 4] = b"DCAL";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 * 7;

pub fn encode_table(table: &EmbeddingTable) -> Vec<u8> {
    let sig = table.sig();
    let mut out =
        Vec::with_capacity(HEADER_LEN + 8 * (table.entities().as_slice().len() + table.relations().as_slice().len()));
    out.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        sig.p() as u32,
        sig.q() as u32,
        sig.r() as u32,
        sig.d() as u32,
        table.num_entities() as u32,
        table.num_relation_rows() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in table.entities().as_slice().iter().chain(table.relations().as_slice()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_table(bytes: &[u8]) -> Result<EmbeddingTable> {
    let bad = |msg: String| Error::ModelFormat(msg);
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing DCAL header".into()));
    }
    let word = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize
    };
    let version = word(0) as u32;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let sig = Signature::new(word(1), word(2), word(3), word(4))?;
    let (ne, nr) = (word(5), word(6));
    let d = sig.d();
    let expected = HEADER_LEN + 8 * d * (ne + nr);
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values: Vec<f64> =
        bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let (ent, rel) = values.split_at(ne * d);
    EmbeddingTable::new(sig, Matrix::from_vec(ne, d, ent.to_vec())?, Matrix::from_vec(nr, d, rel.to_vec())?)
        .map_err(|e| bad(e.to_string()))
}

/// Path of the vocabulary sidecar for a model file.
pub fn vocab_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".vocab.json");
    model.with_file_name(name)
}

pub fn save_model(path: &Path, table: &EmbeddingTable, vocab: &Vocab) -> Result<()> {
    fs::write(path, encode_table(table))?;
    fs::write(vocab_path(path), serde_json::to_vec_pretty(vocab)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(EmbeddingTable, Vocab)> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_owned()));
    }
    let table = decode_table(&fs::read(path)?)?;
    let sidecar = vocab_path(path);
    if !sidecar.is_file() {
        return Err(Error::MissingFile(sidecar));
    }
    let vocab: Vocab = serde_json::from_slice(&fs::read(&sidecar)?)?;
    if vocab.num_entities() != table.num_entities() || vocab.num_relation_rows() != table.num_relation_rows() {
        return Err(Error::ModelFormat("vocabulary sidecar does not match the model".into()));
    }
    Ok((table, vocab))
}
