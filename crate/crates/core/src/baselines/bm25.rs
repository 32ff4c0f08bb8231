//! Okapi BM25 over the featurizer's tokens.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::CodeSample;
use crate::embedding::tokenize;
use crate::error::{Error, Result};
use crate::search::{top_hits, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
struct Doc {
    id: String,
    tf: HashMap<String, usize>,
    len: usize,
}

/// Term statistics for a fixed document collection.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<Doc>,
    df: HashMap<String, usize>,
    avgdl: f64,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn new(corpus: &[CodeSample], params: Bm25Params) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::domain("BM25 corpus is empty"));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let docs: Vec<Doc> = corpus
            .iter()
            .map(|s| {
                let mut tf: HashMap<String, usize> = HashMap::new();
                let mut len = 0;
                for tok in tokenize(&s.text) {
                    *tf.entry(tok).or_default() += 1;
                    len += 1;
                }
                for term in tf.keys() {
                    *df.entry(term.clone()).or_default() += 1;
                }
                Doc {
                    id: s.id.clone(),
                    tf,
                    len,
                }
            })
            .collect();
        let avgdl = docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64;
        Ok(Bm25Index {
            docs,
            df,
            avgdl,
            params,
        })
    }

    /// `ln(1 + (N − n + 0.5) / (n + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.df.get(term).copied().unwrap_or(0) as f64;
        let total = self.docs.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Scores of every document, in corpus order. Each distinct query term
    /// counts once.
    pub fn scores(&self, query_text: &str) -> Vec<f64> {
        let terms: BTreeSet<String> = tokenize(query_text).collect();
        let weighted: Vec<(&String, f64)> = terms.iter().map(|t| (t, self.idf(t))).collect();
        let Bm25Params { k1, b } = self.params;
        self.docs
            .iter()
            .map(|d| {
                let rel_len = if self.avgdl > 0.0 { d.len as f64 / self.avgdl } else { 1.0 };
                let norm = k1 * (1.0 - b + b * rel_len);
                weighted
                    .iter()
                    .map(|(t, idf)| match d.tf.get(*t) {
                        Some(&tf) => {
                            let tf = tf as f64;
                            idf * tf * (k1 + 1.0) / (tf + norm)
                        }
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    pub fn rank(&self, query: &CodeSample, n: usize) -> Vec<SearchHit> {
        let scored = self
            .docs
            .iter()
            .map(|d| d.id.clone())
            .zip(self.scores(&query.text))
            .collect();
        top_hits(scored, n)
    }
}

/// Top-`n` corpus documents for the query under BM25 with default parameters.
pub fn bm25_rank(corpus: &[CodeSample], query: &CodeSample, n: usize) -> Result<Vec<SearchHit>> {
    Ok(Bm25Index::new(corpus, Bm25Params::default())?.rank(query, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> CodeSample {
        CodeSample::new(id, "toy", "p", text)
    }

    #[test]
    fn disjoint_query_scores_zero() {
        let corpus = [doc("a", "alpha beta"), doc("b", "gamma")];
        let idx = Bm25Index::new(&corpus, Bm25Params::default()).unwrap();
        assert_eq!(idx.scores("delta epsilon"), vec![0.0, 0.0]);
    }

    #[test]
    fn single_term_by_hand() {
        // N=2, n=1: idf = ln(1 + 1.5/1.5) = ln 2. avgdl = 1.5.
        let corpus = [doc("a", "x y"), doc("b", "z")];
        let idx = Bm25Index::new(&corpus, Bm25Params::default()).unwrap();
        let s = idx.scores("x");
        let norm = 1.2 * (1.0 - 0.75 + 0.75 * 2.0 / 1.5);
        let expected = 2f64.ln() * 2.2 / (1.0 + norm);
        assert!((s[0] - expected).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(bm25_rank(&[], &doc("q", "x"), 1).is_err());
    }
}
