use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Similarity used for training targets and search scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// `|a·b| / (‖a‖‖b‖)`, range `[0, 1]`.
    #[default]
    AbsCosine,
    /// `a·b / (‖a‖‖b‖)`, range `[-1, 1]`.
    Cosine,
}

impl SimilarityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityKind::AbsCosine => "abs_cosine",
            SimilarityKind::Cosine => "cosine",
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Combine a dot product and two squared norms into a similarity.
///
/// `sqrt(na * nb)` rather than `sqrt(na) * sqrt(nb)` so that `a == b` gives
/// exactly 1.
pub(crate) fn from_parts(kind: SimilarityKind, dot: f64, na: f64, nb: f64) -> f64 {
    let numerator = match kind {
        SimilarityKind::AbsCosine => dot.abs(),
        SimilarityKind::Cosine => dot,
    };
    let mut denom = (na * nb).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        denom = na.sqrt() * nb.sqrt();
    }
    (numerator / denom).clamp(-1.0, 1.0)
}

pub(crate) fn similarity_slices(kind: SimilarityKind, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "similarity of vectors with dims {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (sq_norm(a), sq_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("similarity of a zero-norm vector"));
    }
    Ok(from_parts(kind, dot(a, b), na, nb))
}

/// Absolute cosine similarity, in `[0, 1]`.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    similarity_slices(SimilarityKind::AbsCosine, a.values(), b.values())
}

pub fn similarity(kind: SimilarityKind, a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    similarity_slices(kind, a.values(), b.values())
}

/// Similarity plus its gradients with respect to both arguments.
pub(crate) struct SimGrad {
    pub value: f64,
    pub d_a: Vec<f64>,
    pub d_b: Vec<f64>,
}

/// `∂s/∂a = σ b/(‖a‖‖b‖) − s a/‖a‖²` with `σ = sign(a·b)` (`sign(0) = 0`) for
/// the absolute variant and `σ = 1` for plain cosine.
pub(crate) fn similarity_with_grad(kind: SimilarityKind, a: &[f64], b: &[f64]) -> Result<SimGrad> {
    let value = similarity_slices(kind, a, b)?;
    let d = dot(a, b);
    let (na, nb) = (sq_norm(a), sq_norm(b));
    let sigma = match kind {
        SimilarityKind::AbsCosine => {
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        SimilarityKind::Cosine => 1.0,
    };
    let scale = sigma / (na.sqrt() * nb.sqrt());
    let d_a = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| scale * bi - value * ai / na)
        .collect();
    let d_b = b
        .iter()
        .zip(a)
        .map(|(bi, ai)| scale * ai - value * bi / nb)
        .collect();
    Ok(SimGrad { value, d_a, d_b })
}
