//! The precomputed document index and exact top-n search over it.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{decode_f32, encode_f32, lines, quote, unquote, Header};
use crate::corpus::CodeSample;
use crate::embedding::BaseEmbeddings;
use crate::error::{Error, Result};
use crate::trainer::{from_parts, sq_norm, EncoderParams, SimilarityKind};

const FORMAT: &str = "REINF-IDX";
const MAGIC: &str = "REINF-IDX v1";
/// Entries per work unit when scoring in parallel.
const PARALLEL_CHUNK: usize = 4096;

/// Projected document vectors in one contiguous `f32` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    dim: usize,
    ids: Vec<String>,
    problems: Vec<String>,
    data: Vec<f32>,
    sq_norms: Vec<f64>,
    encoder_digest: String,
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub sample_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Descending score, then ascending id.
pub fn hit_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Sort `(id, score)` pairs under the hit order and keep the first `n`.
pub fn top_hits(mut scored: Vec<(String, f64)>, n: usize) -> Vec<SearchHit> {
    let cmp = |a: &(String, f64), b: &(String, f64)| hit_order(a.1, &a.0, b.1, &b.0);
    if n < scored.len() {
        if n > 0 {
            scored.select_nth_unstable_by(n - 1, cmp);
        }
        scored.truncate(n);
    }
    scored.sort_by(cmp);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (sample_id, score))| SearchHit {
            sample_id,
            score,
            rank: i + 1,
        })
        .collect()
}

fn check_digest(digest: &str) -> bool {
    digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl SearchIndex {
    /// An empty index; `encoder_digest` must be a lowercase SHA-256 hex string.
    pub fn new(dim: usize, encoder_digest: impl Into<String>) -> Result<Self> {
        let encoder_digest = encoder_digest.into();
        if !check_digest(&encoder_digest) {
            return Err(Error::domain(format!("invalid encoder digest {encoder_digest:?}")));
        }
        if dim == 0 {
            return Err(Error::domain("index dimension must be at least 1"));
        }
        Ok(SearchIndex {
            dim,
            ids: Vec::new(),
            problems: Vec::new(),
            data: Vec::new(),
            sq_norms: Vec::new(),
            encoder_digest,
        })
    }

    pub fn push(&mut self, id: impl Into<String>, problem: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::domain(format!(
                "vector for {id:?} has dim {}, index has {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("vector for {id:?} is not finite")));
        }
        let widened: Vec<f64> = vector.iter().map(|&v| f64::from(v)).collect();
        let n = sq_norm(&widened);
        if n == 0.0 {
            return Err(Error::domain(format!("vector for {id:?} has zero norm")));
        }
        if self.ids.contains(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.ids.push(id);
        self.problems.push(problem.into());
        self.data.extend_from_slice(vector);
        self.sq_norms.push(n);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn encoder_digest(&self) -> &str {
        &self.encoder_digest
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn problem_of(&self, i: usize) -> &str {
        &self.problems[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterate `(id, problem, vector)`.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &[f32])> {
        (0..self.len()).map(|i| (self.ids[i].as_str(), self.problems[i].as_str(), self.vector(i)))
    }

    /// Score every entry against a query vector, in index order.
    pub fn score_all(&self, query: &[f32], kind: SimilarityKind) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::domain(format!(
                "query has dim {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        let q: Vec<f64> = query.iter().map(|&v| f64::from(v)).collect();
        let nq = sq_norm(&q);
        if nq == 0.0 || !nq.is_finite() {
            return Err(Error::domain("query vector has zero or non-finite norm"));
        }
        let score = |i: usize| {
            let row = self.vector(i);
            let mut dot = 0.0;
            for (a, b) in q.iter().zip(row) {
                dot += a * f64::from(*b);
            }
            from_parts(kind, dot, nq, self.sq_norms[i])
        };
        if self.len() > PARALLEL_CHUNK {
            Ok((0..self.len()).into_par_iter().with_min_len(PARALLEL_CHUNK).map(score).collect())
        } else {
            Ok((0..self.len()).map(score).collect())
        }
    }

    /// Exact top-`n` for a query vector.
    pub fn search_vector(&self, query: &[f32], n: usize, kind: SimilarityKind) -> Result<Vec<SearchHit>> {
        if n == 0 {
            return Err(Error::domain("n must be at least 1"));
        }
        let scores = self.score_all(query, kind)?;
        Ok(top_hits(self.ids.iter().cloned().zip(scores).collect(), n))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} dim={} count={} encoder_digest={}\n",
            self.dim,
            self.len(),
            self.encoder_digest
        );
        for (id, problem, v) in self.entries() {
            out.push_str(&quote(id));
            out.push('\t');
            out.push_str(&quote(problem));
            out.push('\t');
            out.push_str(&encode_f32(v.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let all = lines(FORMAT, text)?;
        let header = Header::parse(FORMAT, MAGIC, all.first(), None)?;
        let dim: usize = header.get_parsed("dim")?;
        let count: usize = header.get_parsed("count")?;
        let digest = header.get("encoder_digest")?;
        if !check_digest(digest) {
            return Err(all[0].error(FORMAT, format!("malformed encoder_digest {digest:?}")));
        }
        let mut index = SearchIndex::new(dim, digest).map_err(|e| all[0].error(FORMAT, e.to_string()))?;
        for line in &all[1..] {
            let fields: Vec<&str> = line.text.split('\t').collect();
            if fields.len() != 3 {
                return Err(line.error(
                    FORMAT,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let id = unquote(FORMAT, line, fields[0])?;
            let problem = unquote(FORMAT, line, fields[1])?;
            let v = decode_f32(FORMAT, line, fields[2], dim)?;
            index
                .push(id, problem, &v)
                .map_err(|e| line.error(FORMAT, e.to_string()))?;
        }
        if index.len() != count {
            return Err(Error::Parse {
                format: FORMAT,
                line: all.len() + 1,
                offset: text.len(),
                message: format!("header declares {count} rows, found {}", index.len()),
            });
        }
        Ok(index)
    }
}

/// Project every sample with the document encoder.
pub fn build_index(
    samples: &[CodeSample],
    params_d: &EncoderParams,
    provider: &dyn BaseEmbeddings,
) -> Result<SearchIndex> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    let projected: Vec<Vec<f32>> = samples
        .par_iter()
        .map(|s| {
            let base = provider.base(s)?;
            let out = params_d.forward_slice(&base)?;
            Ok(out.iter().map(|&v| v as f32).collect())
        })
        .collect::<Result<_>>()?;
    let mut index = SearchIndex::new(params_d.out_dim(), params_d.digest())?;
    for (s, v) in samples.iter().zip(&projected) {
        index.push(s.id.clone(), s.problem_id.clone(), v)?;
    }
    Ok(index)
}

pub fn save_index(index: &SearchIndex, path: &Path) -> Result<()> {
    crate::codec::write_string(path, &index.to_text())
}

pub fn load_index(path: &Path) -> Result<SearchIndex> {
    SearchIndex::from_text(&crate::codec::read_to_string(path)?)
}

/// The query encoder's projection of a sample, rounded to index precision.
pub fn query_vector(q: &CodeSample, params_q: &EncoderParams, provider: &dyn BaseEmbeddings) -> Result<Vec<f32>> {
    let base = provider.base(q)?;
    Ok(params_q.forward_slice(&base)?.iter().map(|&v| v as f32).collect())
}

/// Exact top-`n` search under absolute cosine similarity.
pub fn query(
    index: &SearchIndex,
    q: &CodeSample,
    params_q: &EncoderParams,
    provider: &dyn BaseEmbeddings,
    n: usize,
) -> Result<Vec<SearchHit>> {
    query_with(index, q, params_q, provider, n, SimilarityKind::AbsCosine)
}

pub fn query_with(
    index: &SearchIndex,
    q: &CodeSample,
    params_q: &EncoderParams,
    provider: &dyn BaseEmbeddings,
    n: usize,
    kind: SimilarityKind,
) -> Result<Vec<SearchHit>> {
    index.search_vector(&query_vector(q, params_q, provider)?, n, kind)
}
