//! Binary checkpoint format.
//!
//! `ACF1` magic, a little-endian `u32` header length, a UTF-8 JSON header,
//! then raw little-endian `f64` tensor data in directory order. The
//! directory lists the model tensors followed by the Adam moments
//! (`adam.m.<name>`, `adam.v.<name>`); offsets are in bytes from the start
//! of the data section.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Model, TrainingConfig};
use crate::error::{Error, Result};
use crate::vocab::ActionVocabulary;

pub const MAGIC: &[u8; 4] = b"ACF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab_hash: String,
    pub model: Model,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn config(&self) -> &TrainingConfig {
        self.model.config()
    }

    /// Fails unless `vocab` is the vocabulary this checkpoint was trained with.
    pub fn check_vocab(&self, vocab: &ActionVocabulary) -> Result<()> {
        let hash = vocab.hash();
        if hash != self.vocab_hash {
            return Err(Error::VocabMismatch { checkpoint: self.vocab_hash.clone(), vocab: hash });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainingConfig,
    vocab_hash: String,
    n_actions: usize,
    n_apps: usize,
    adam_step: u64,
    tensors: Vec<DirEntry>,
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    let model = &ckpt.model;
    let mut tensors = Vec::new();
    let mut offset = 0;
    for prefix in ["", "adam.m.", "adam.v."] {
        for t in model.tensors() {
            tensors.push(DirEntry { name: format!("{prefix}{}", t.name), shape: t.shape.clone(), offset });
            offset += t.len() * 8;
        }
    }
    let header = Header {
        config: model.config().clone(),
        vocab_hash: ckpt.vocab_hash.clone(),
        n_actions: model.n_actions(),
        n_apps: model.n_apps(),
        adam_step: ckpt.adam.step,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut data = Vec::with_capacity(offset);
    for values in [model.params(), &ckpt.adam.m, &ckpt.adam.v] {
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&data)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing ACF1 magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes.get(8..8 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let data = &bytes[8 + header_len..];

    let layout = Model::zeros(header.config.clone(), header.n_actions, header.n_apps)?;
    let n = layout.params().len();
    if header.tensors.len() != 3 * layout.tensors().len() {
        return Err(bad("tensor directory does not match the configuration"));
    }
    let mut flat = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for (i, entry) in header.tensors.iter().enumerate() {
        let expected = &layout.tensors()[i % layout.tensors().len()];
        if entry.shape != expected.shape || !entry.name.ends_with(&expected.name) {
            return Err(bad(&format!("unexpected tensor {}", entry.name)));
        }
        let len = expected.len() * 8;
        let raw = data
            .get(entry.offset..entry.offset + len)
            .ok_or_else(|| bad(&format!("tensor {} out of bounds", entry.name)))?;
        let target = &mut flat[i / layout.tensors().len()];
        target.extend(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
    }
    let [params, m, v] = flat;
    if params.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("checkpoint tensor".into()));
    }
    let model = Model::from_params(header.config, header.n_actions, header.n_apps, params)?;
    Ok(Checkpoint {
        vocab_hash: header.vocab_hash,
        model,
        adam: AdamState { m, v, step: header.adam_step },
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(fs::File::open(path)?)
}
