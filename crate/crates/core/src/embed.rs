//! Per-sentence subword embeddings and the providers that produce them.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Sentence;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("sentence {sentence}: {message}")]
    Invalid { sentence: String, message: String },
    #[error("no embeddings for sentence {0}")]
    Missing(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("unknown embedding provider {0:?} (expected `hash` or `file:<path>`)")]
    UnknownProvider(String),
}

/// Multi-layer subword vectors for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    /// L × S × D.
    pub vectors: Array3<f64>,
    /// Subword indices of each token, in order.
    pub alignment: Vec<Vec<usize>>,
}

impl EmbeddingBundle {
    pub fn new(sentence: &str, vectors: Array3<f64>, alignment: Vec<Vec<usize>>) -> Result<Self, EmbeddingError> {
        let b = Self { vectors, alignment };
        b.check(sentence)?;
        Ok(b)
    }

    pub fn layers(&self) -> usize {
        self.vectors.dim().0
    }

    pub fn subwords(&self) -> usize {
        self.vectors.dim().1
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim().2
    }

    pub fn tokens(&self) -> usize {
        self.alignment.len()
    }

    /// Every subword belongs to exactly one token and all values are finite.
    pub fn check(&self, sentence: &str) -> Result<(), EmbeddingError> {
        let bad = |message: String| EmbeddingError::Invalid { sentence: sentence.to_string(), message };
        let (l, s, d) = self.vectors.dim();
        if l == 0 || d == 0 {
            return Err(bad(format!("empty tensor {l}×{s}×{d}")));
        }
        if s < self.alignment.len() {
            return Err(bad(format!("{s} subwords for {} tokens", self.alignment.len())));
        }
        let mut owner = vec![None; s];
        for (t, subwords) in self.alignment.iter().enumerate() {
            if subwords.is_empty() {
                return Err(bad(format!("token {t} has no subwords")));
            }
            for &i in subwords {
                match owner.get_mut(i) {
                    None => return Err(bad(format!("subword {i} out of range"))),
                    Some(Some(prev)) => return Err(bad(format!("subword {i} shared by tokens {prev} and {t}"))),
                    Some(slot) => *slot = Some(t),
                }
            }
        }
        if let Some(i) = owner.iter().position(Option::is_none) {
            return Err(bad(format!("subword {i} belongs to no token")));
        }
        if self.vectors.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        Ok(())
    }
}

/// Where a model's input embeddings came from, stored with checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderProvenance {
    Hash { seed: u64, layers: usize, dim: usize },
    File { path: PathBuf },
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingBundle, EmbeddingError>;
    fn layers(&self) -> usize;
    fn dim(&self) -> usize;
    fn provenance(&self) -> ProviderProvenance;
}

/// Deterministic pseudo-embeddings keyed by seed, layer and subword text.
/// Tokens longer than [`HashEmbeddings::PIECE`] characters are split into
/// several subwords.
#[derive(Debug, Clone)]
pub struct HashEmbeddings {
    pub seed: u64,
    pub layers: usize,
    pub dim: usize,
}

impl HashEmbeddings {
    pub const PIECE: usize = 4;

    pub fn new(seed: u64, layers: usize, dim: usize) -> Self {
        Self { seed, layers, dim }
    }

    fn pieces(token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        if chars.is_empty() {
            return vec![String::new()];
        }
        chars.chunks(Self::PIECE).map(|c| c.iter().collect()).collect()
    }

    fn vector(&self, layer: usize, piece: &str, first: bool) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((layer as u64).to_le_bytes());
        h.update([first as u8]);
        h.update(piece.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl EmbeddingProvider for HashEmbeddings {
    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingBundle, EmbeddingError> {
        let mut pieces = Vec::new();
        let mut alignment = Vec::with_capacity(sentence.tokens.len());
        for token in &sentence.tokens {
            let start = pieces.len();
            for (k, p) in Self::pieces(&token.text).into_iter().enumerate() {
                pieces.push((p, k == 0));
            }
            alignment.push((start..pieces.len()).collect());
        }
        let mut vectors = Array3::zeros((self.layers, pieces.len(), self.dim));
        for l in 0..self.layers {
            for (s, (p, first)) in pieces.iter().enumerate() {
                for (d, x) in self.vector(l, p, *first).into_iter().enumerate() {
                    vectors[[l, s, d]] = x;
                }
            }
        }
        EmbeddingBundle::new(&sentence.id, vectors, alignment)
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn provenance(&self) -> ProviderProvenance {
        ProviderProvenance::Hash { seed: self.seed, layers: self.layers, dim: self.dim }
    }
}

/// One line of an embedding file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub sentence_id: String,
    pub layers: usize,
    pub dim: usize,
    pub alignment: Vec<Vec<usize>>,
    /// L × S × D nested arrays.
    pub vectors: Vec<Vec<Vec<f64>>>,
}

impl EmbeddingRecord {
    pub fn from_bundle(sentence_id: &str, b: &EmbeddingBundle) -> Self {
        Self {
            sentence_id: sentence_id.to_string(),
            layers: b.layers(),
            dim: b.dim(),
            alignment: b.alignment.clone(),
            vectors: b
                .vectors
                .outer_iter()
                .map(|layer| layer.outer_iter().map(|v| v.to_vec()).collect())
                .collect(),
        }
    }

    pub fn into_bundle(self) -> Result<EmbeddingBundle, EmbeddingError> {
        let id = self.sentence_id;
        let bad = |message: String| EmbeddingError::Invalid { sentence: id.clone(), message };
        if self.vectors.len() != self.layers {
            return Err(bad(format!("declared {} layers, found {}", self.layers, self.vectors.len())));
        }
        let s = self.vectors.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(self.layers * s * self.dim);
        for layer in &self.vectors {
            if layer.len() != s {
                return Err(bad("layers have different subword counts".into()));
            }
            for v in layer {
                if v.len() != self.dim {
                    return Err(bad(format!("vector of length {} where dim is {}", v.len(), self.dim)));
                }
                flat.extend_from_slice(v);
            }
        }
        let vectors = Array3::from_shape_vec((self.layers, s, self.dim), flat).map_err(|e| bad(e.to_string()))?;
        EmbeddingBundle::new(&id, vectors, self.alignment)
    }
}

/// Embeddings read from a JSON-lines file produced by an external encoder.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    path: PathBuf,
    layers: usize,
    dim: usize,
    bundles: HashMap<String, EmbeddingBundle>,
}

impl FileEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| EmbeddingError::Io { path: path.clone(), source };
        let reader = BufReader::new(File::open(&path).map_err(io)?);
        let mut bundles = HashMap::new();
        let mut shape = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord = serde_json::from_str(&line)
                .map_err(|source| EmbeddingError::Json { path: path.clone(), line: i + 1, source })?;
            let id = rec.sentence_id.clone();
            let dims = (rec.layers, rec.dim);
            if *shape.get_or_insert(dims) != dims {
                return Err(EmbeddingError::Invalid {
                    sentence: id,
                    message: format!("layers/dim {dims:?} differ from earlier records {:?}", shape.unwrap()),
                });
            }
            bundles.insert(id, rec.into_bundle()?);
        }
        let (layers, dim) = shape.unwrap_or((0, 0));
        Ok(Self { path, layers, dim, bundles })
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingBundle, EmbeddingError> {
        let b = self
            .bundles
            .get(&sentence.id)
            .ok_or_else(|| EmbeddingError::Missing(sentence.id.clone()))?;
        if b.tokens() != sentence.tokens.len() {
            return Err(EmbeddingError::Invalid {
                sentence: sentence.id.clone(),
                message: format!("alignment covers {} tokens, sentence has {}", b.tokens(), sentence.tokens.len()),
            });
        }
        Ok(b.clone())
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn provenance(&self) -> ProviderProvenance {
        ProviderProvenance::File { path: self.path.clone() }
    }
}

/// Parses a provider spec: `hash` or `file:<path>`.
pub fn provider_from_spec(spec: &str, seed: u64, layers: usize, dim: usize) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
    if spec == "hash" {
        Ok(Box::new(HashEmbeddings::new(seed, layers, dim)))
    } else if let Some(path) = spec.strip_prefix("file:") {
        Ok(Box::new(FileEmbeddings::load(path)?))
    } else {
        Err(EmbeddingError::UnknownProvider(spec.to_string()))
    }
}

/// Rebuilds the provider a checkpoint was trained with.
pub fn provider_from_provenance(provenance: &ProviderProvenance) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
    Ok(match provenance {
        ProviderProvenance::Hash { seed, layers, dim } => Box::new(HashEmbeddings::new(*seed, *layers, *dim)),
        ProviderProvenance::File { path } => Box::new(FileEmbeddings::load(path)?),
    })
}
