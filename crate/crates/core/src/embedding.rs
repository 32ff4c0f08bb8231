//! Frozen base embeddings: the built-in token-hash featurizer and
//! `REINF-EMB v1` embedding tables produced by external encoders.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use crate::codec::{self, stable_hash, Header};
use crate::corpus::CodeSample;
use crate::error::{Error, Result};

const EMB_FORMAT: &str = "REINF-EMB v1";

/// Lower-cased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// A finite, fixed-dimension real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("embedding dimension must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding contains a non-finite entry"));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Signed feature-hashing bag-of-tokens encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    dim: usize,
    seed: u64,
}

impl Featurizer {
    pub const MIN_DIM: usize = 8;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < Self::MIN_DIM {
            return Err(Error::config(format!(
                "featurizer dim must be at least {}, got {dim}",
                Self::MIN_DIM
            )));
        }
        Ok(Featurizer { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> String {
        format!("token-hash dim={} seed={}", self.dim, self.seed)
    }

    pub fn featurize_text(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let h = stable_hash(self.seed, &token);
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            acc[0] = 1.0;
        } else {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector { values: acc }
    }

    pub fn featurize(&self, sample: &CodeSample) -> EmbeddingVector {
        self.featurize_text(&sample.text)
    }
}

/// Vectors keyed by sample id, stored at `f32` precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
    pub provenance: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provenance: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("embedding table dim must be at least 1"));
        }
        Ok(EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert a vector (rounded to `f32`). Zero vectors and wrong dimensions
    /// are rejected; so is an id already present.
    pub fn insert(&mut self, id: impl Into<String>, vector: &EmbeddingVector) -> Result<()> {
        self.insert_f32(id.into(), vector.to_f32())
    }

    fn insert_f32(&mut self, id: String, values: Vec<f32>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::domain(format!(
                "vector for {id:?} has dim {}, table dim is {}",
                values.len(),
                self.dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("vector for {id:?} has a non-finite entry")));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::domain(format!("vector for {id:?} is all zeros")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.insert(id, values);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<EmbeddingVector> {
        self.entries.get(id).map(|v| {
            EmbeddingVector {
                values: v.iter().map(|&x| f64::from(x)).collect(),
            }
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{EMB_FORMAT} dim={} count={} provenance={}\n",
            self.dim,
            self.entries.len(),
            self.provenance.replace('\n', " ")
        );
        for (id, values) in &self.entries {
            out.push_str(&codec::quote(id));
            out.push('\t');
            out.push_str(&codec::encode_f32(values.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines = codec::lines(EMB_FORMAT, text)?;
        let header = Header::parse(EMB_FORMAT, EMB_FORMAT, lines.first(), Some("provenance"))?;
        let dim: usize = header.get_parsed("dim")?;
        let count: usize = header.get_parsed("count")?;
        let provenance = header.get("provenance")?.to_string();
        if dim == 0 {
            return Err(lines[0].error(EMB_FORMAT, "dim must be at least 1"));
        }
        let mut table = EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
            provenance,
        };
        let rows = &lines[1..];
        if rows.len() != count {
            let at = rows.get(count).or(rows.last()).unwrap_or(&lines[0]);
            return Err(at.error(
                EMB_FORMAT,
                format!("header declares {count} rows, found {}", rows.len()),
            ));
        }
        for line in rows {
            let (id_field, payload) = line
                .text
                .split_once('\t')
                .ok_or_else(|| line.error(EMB_FORMAT, "expected <id>\\t<vector>"))?;
            let id = codec::unquote(EMB_FORMAT, line, id_field)?;
            let values = codec::decode_f32(EMB_FORMAT, line, payload, dim)?;
            table.insert_f32(id, values).map_err(|e| line.error(EMB_FORMAT, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        codec::write_string(path, &self.to_text())
    }

    /// Read a table from `path`; `-` reads standard input.
    pub fn read(path: &Path) -> Result<Self> {
        if path == Path::new("-") {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| Error::io("<stdin>", e))?;
            return Self::from_text(&text);
        }
        Self::from_text(&codec::read_to_string(path)?)
    }
}

/// Source of base embeddings for samples.
pub trait BaseEmbeddings: Sync {
    fn dim(&self) -> usize;
    fn base(&self, sample: &CodeSample) -> Result<Cow<'_, [f64]>>;
}

/// Either the built-in featurizer or a stored table.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    Featurizer(Featurizer),
    Table(EmbeddingTable),
}

impl EmbeddingProvider {
    pub fn get_embedding(&self, sample: &CodeSample) -> Result<EmbeddingVector> {
        match self {
            EmbeddingProvider::Featurizer(f) => Ok(f.featurize(sample)),
            EmbeddingProvider::Table(t) => t
                .get(&sample.id)
                .ok_or_else(|| Error::MissingEmbedding(sample.id.clone())),
        }
    }

    /// Fail at construction time when a provider's width disagrees with the
    /// width downstream consumers expect.
    pub fn expect_dim(self, dim: usize) -> Result<Self> {
        if self.dim() != dim {
            return Err(Error::domain(format!(
                "embedding provider has dim {}, expected {dim}",
                self.dim()
            )));
        }
        Ok(self)
    }

    pub fn provenance(&self) -> String {
        match self {
            EmbeddingProvider::Featurizer(f) => f.provenance(),
            EmbeddingProvider::Table(t) => t.provenance.clone(),
        }
    }
}

impl BaseEmbeddings for EmbeddingProvider {
    fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Featurizer(f) => f.dim(),
            EmbeddingProvider::Table(t) => t.dim(),
        }
    }

    fn base(&self, sample: &CodeSample) -> Result<Cow<'_, [f64]>> {
        Ok(Cow::Owned(self.get_embedding(sample)?.into_values()))
    }
}

/// Base vectors resolved up front for a fixed sample set.
#[derive(Debug, Clone, Default)]
pub struct ResolvedBases {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl ResolvedBases {
    pub fn resolve<'a>(
        provider: &dyn BaseEmbeddings,
        samples: impl IntoIterator<Item = &'a CodeSample>,
    ) -> Result<Self> {
        let mut vectors = HashMap::new();
        for s in samples {
            if !vectors.contains_key(&s.id) {
                vectors.insert(s.id.clone(), provider.base(s)?.into_owned());
            }
        }
        Ok(ResolvedBases {
            dim: provider.dim(),
            vectors,
        })
    }
}

impl BaseEmbeddings for ResolvedBases {
    fn dim(&self) -> usize {
        self.dim
    }

    fn base(&self, sample: &CodeSample) -> Result<Cow<'_, [f64]>> {
        self.vectors
            .get(&sample.id)
            .map(|v| Cow::Borrowed(v.as_slice()))
            .ok_or_else(|| Error::MissingEmbedding(sample.id.clone()))
    }
}
