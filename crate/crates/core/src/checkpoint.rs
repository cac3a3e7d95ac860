//! Model checkpoints: a directory holding `config.json`, `params.bin`,
//! `ontology.json` and `provenance.json`.
//!
//! `params.bin` is little-endian: the magic `IEGP`, a `u32` format version,
//! a `u32` parameter count, then per parameter its name (`u32` length +
//! UTF-8), group (`u8`: 0 encoder, 1 decoder), rows and cols (`u32` each) and
//! the row-major `f64` values.

use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Ontology;
use crate::embed::ProviderProvenance;
use crate::nn::{ParamGroup, ParamStore};
use crate::parser::{Model, ParseError, ParserConfig};
use crate::score::ScoreReport;
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"IEGP";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub format_version: u32,
    pub parser: ParserConfig,
    pub embedding_layers: usize,
    pub embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

/// Contents of `provenance.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub embedding_provider: ProviderProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<ScoreReport>,
    pub crate_version: String,
    pub created: String,
}

impl Meta {
    pub fn new(train: &TrainConfig, provider: &ProviderProvenance, epoch: usize, dev: Option<ScoreReport>) -> Self {
        Self {
            embedding_provider: provider.clone(),
            train: Some(train.clone()),
            epoch,
            dev,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn untrained(provider: &ProviderProvenance) -> Self {
        Self {
            embedding_provider: provider.clone(),
            train: None,
            epoch: 0,
            dev: None,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Utc::now().to_rfc3339(),
        }
    }
}

pub fn encode_params(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(params.len() as u32).unwrap();
    for (_, p) in params.iter() {
        out.write_u32::<LittleEndian>(p.name.len() as u32).unwrap();
        out.write_all(p.name.as_bytes()).unwrap();
        out.write_u8(match p.group {
            ParamGroup::Encoder => 0,
            ParamGroup::Decoder => 1,
        })
        .unwrap();
        let (r, c) = p.value.dim();
        out.write_u32::<LittleEndian>(r as u32).unwrap();
        out.write_u32::<LittleEndian>(c as u32).unwrap();
        for x in p.value.iter() {
            out.write_f64::<LittleEndian>(*x).unwrap();
        }
    }
    out
}

/// Decoded parameters as `(name, group, value)`.
pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, ParamGroup, Array2<f64>)>, String> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| e.to_string())?;
    if &magic != MAGIC {
        return Err("not a parameter file".into());
    }
    let err = |e: std::io::Error| format!("truncated parameter file: {e}");
    let version = r.read_u32::<LittleEndian>().map_err(err)?;
    if version != FORMAT_VERSION {
        return Err(format!("parameter format {version}, expected {FORMAT_VERSION}"));
    }
    let count = r.read_u32::<LittleEndian>().map_err(err)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(err)?;
        let name = String::from_utf8(name).map_err(|e| e.to_string())?;
        let group = match r.read_u8().map_err(err)? {
            0 => ParamGroup::Encoder,
            1 => ParamGroup::Decoder,
            g => return Err(format!("unknown parameter group {g}")),
        };
        let rows = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(err)?;
        out.push((name, group, Array2::from_shape_vec((rows, cols), data).map_err(|e| e.to_string())?));
    }
    if (r.position() as usize) != bytes.len() {
        return Err("trailing bytes after parameters".into());
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let mut text = serde_json::to_string_pretty(value).expect("checkpoint JSON serializes");
    text.push('\n');
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| CheckpointError::Io { path: path.into(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CheckpointError::Json { path: path.into(), source })
}

pub fn save(model: &Model, meta: &Meta, dir: &Path) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir).map_err(|source| CheckpointError::Io { path: dir.into(), source })?;
    let config = ModelConfig {
        format_version: FORMAT_VERSION,
        parser: model.config.clone(),
        embedding_layers: model.embedding_layers,
        embedding_dim: model.embedding_dim,
        train: meta.train.clone(),
    };
    write_json(&dir.join("config.json"), &config)?;
    write_json(&dir.join("ontology.json"), &model.ontology)?;
    write_json(&dir.join("provenance.json"), meta)?;
    let path = dir.join("params.bin");
    crate::io::write_atomic(&path, &encode_params(&model.params)).map_err(|source| CheckpointError::Io { path, source })
}

pub fn load(dir: &Path) -> Result<(Model, Meta), CheckpointError> {
    let config: ModelConfig = read_json(&dir.join("config.json"))?;
    let path = dir.join("params.bin");
    let format = |message: String| CheckpointError::Format { path: path.clone(), message };
    if config.format_version != FORMAT_VERSION {
        return Err(format(format!("checkpoint format {}, expected {FORMAT_VERSION}", config.format_version)));
    }
    let ontology: Ontology = read_json(&dir.join("ontology.json"))?;
    let meta: Meta = read_json(&dir.join("provenance.json"))?;
    let mut model = Model::new(config.parser, ontology, config.embedding_layers, config.embedding_dim, 0)?;
    let bytes = std::fs::read(&path).map_err(|source| CheckpointError::Io { path: path.clone(), source })?;
    let stored = decode_params(&bytes).map_err(format)?;
    if stored.len() != model.params.len() {
        return Err(format(format!("{} parameters stored, model has {}", stored.len(), model.params.len())));
    }
    for (name, group, value) in stored {
        let id = model.params.find(&name).ok_or_else(|| format(format!("unexpected parameter {name}")))?;
        let slot = model.params.value_mut(id);
        if slot.dim() != value.dim() {
            return Err(format(format!("{name}: shape {:?}, expected {:?}", value.dim(), slot.dim())));
        }
        *slot = value;
        let expected = model.params.iter().nth(id.index()).map(|(_, p)| p.group);
        if expected != Some(group) {
            return Err(format(format!("{name}: wrong parameter group")));
        }
    }
    Ok((model, meta))
}
