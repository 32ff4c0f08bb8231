//! Ranking metrics and the held-out evaluation protocol.
//!
//! Each source-language test sample queries the pool of target-language test
//! samples; a hit is positive when it shares the query's problem.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ast_rank, Bm25Index, Bm25Params};
use crate::corpus::{CodeSample, DatasetSplit};
use crate::embedding::BaseEmbeddings;
use crate::error::{Error, Result};
use crate::search::{build_index, query_vector, SearchHit, SearchIndex};
use crate::trainer::{EncoderParams, SimilarityKind};

/// A query's full ranking of the pool with positive flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedQueryResult {
    pub query_id: String,
    pub ranking: Vec<(String, bool)>,
    pub n_positives: usize,
    pub n_negatives: usize,
}

impl RankedQueryResult {
    pub fn new(query_id: impl Into<String>, ranking: Vec<(String, bool)>) -> Self {
        let n_positives = ranking.iter().filter(|(_, p)| *p).count();
        RankedQueryResult {
            query_id: query_id.into(),
            n_negatives: ranking.len() - n_positives,
            n_positives,
            ranking,
        }
    }

    /// From boolean flags alone; ids are the 1-based positions.
    pub fn from_flags(query_id: impl Into<String>, flags: &[bool]) -> Self {
        Self::new(
            query_id,
            flags.iter().enumerate().map(|(i, &p)| ((i + 1).to_string(), p)).collect(),
        )
    }
}

/// Positives among the first `n` entries.
pub fn precision_at_n(result: &RankedQueryResult, n: usize) -> usize {
    result.ranking.iter().take(n).filter(|(_, p)| *p).count()
}

/// Mean rank of negatives minus mean rank of positives; `None` unless both
/// are present.
pub fn avg_rank_gap(result: &RankedQueryResult) -> Option<f64> {
    if result.n_positives == 0 || result.n_negatives == 0 {
        return None;
    }
    let (mut pos, mut neg) = (0usize, 0usize);
    for (i, (_, p)) in result.ranking.iter().enumerate() {
        if *p {
            pos += i + 1;
        } else {
            neg += i + 1;
        }
    }
    Some(neg as f64 / result.n_negatives as f64 - pos as f64 / result.n_positives as f64)
}

/// 1-based rank of the first positive.
pub fn first_positive(result: &RankedQueryResult) -> Option<usize> {
    result.ranking.iter().position(|(_, p)| *p).map(|i| i + 1)
}

/// Mean first-positive rank over the queries that have a positive, and how
/// many did not.
pub fn avg_first_position(results: &[RankedQueryResult]) -> (Option<f64>, usize) {
    let ranks: Vec<usize> = results.iter().filter_map(first_positive).collect();
    let excluded = results.len() - ranks.len();
    if ranks.is_empty() {
        (None, excluded)
    } else {
        (Some(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64), excluded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub n_max: usize,
    /// Keep queries with no positive in the pool. They then count towards
    /// PR@N (as zero) but still not towards ARG or AFP.
    pub include_no_positive: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            n_max: 5,
            include_no_positive: false,
        }
    }
}

/// Per-metric exclusion counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    /// Queries with no same-problem sample in the pool.
    pub no_positive: usize,
    /// Included queries left out of ARG for lack of a negative.
    pub arg_no_negative: usize,
    /// Included queries left out of ARG and AFP for lack of a positive.
    pub no_positive_metrics: usize,
    /// Queries the ranker could not handle (missing AST).
    pub ranker_queries: usize,
    /// Pool samples the ranker could not score (missing AST).
    pub ranker_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ranker: String,
    /// Mean count of positives in the top N.
    pub pr_at: BTreeMap<usize, f64>,
    /// `pr_at[N] / N`.
    pub pr_at_normalized: BTreeMap<usize, f64>,
    pub arg: Option<f64>,
    pub afp: Option<f64>,
    pub n_queries: usize,
    pub pool_size: usize,
    pub excluded: Exclusions,
    /// How ARG and AFP are averaged.
    pub aggregation: String,
    pub notes: Vec<String>,
    pub config: serde_json::Value,
    pub config_digest: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut rows: Vec<(String, String)> = vec![("ranker".into(), self.ranker.clone())];
        for (n, v) in &self.pr_at {
            rows.push((format!("PR@{n}"), format!("{v:.4} ({:.2}%)", 100.0 * self.pr_at_normalized[n])));
        }
        rows.push(("ARG".into(), fmt(self.arg)));
        rows.push(("AFP".into(), fmt(self.afp)));
        rows.push(("queries".into(), self.n_queries.to_string()));
        rows.push(("pool".into(), self.pool_size.to_string()));
        rows.push(("skipped (no positive)".into(), self.excluded.no_positive.to_string()));
        rows.push(("ARG skipped (no negative)".into(), self.excluded.arg_no_negative.to_string()));
        if self.excluded.ranker_queries + self.excluded.ranker_pool > 0 {
            rows.push(("ranker-excluded queries".into(), self.excluded.ranker_queries.to_string()));
            rows.push(("ranker-excluded pool".into(), self.excluded.ranker_pool.to_string()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

/// Aggregate per-query rankings into a report.
pub fn aggregate(
    ranker: &str,
    results: &[RankedQueryResult],
    pool_size: usize,
    options: EvalOptions,
    mut excluded: Exclusions,
) -> EvalReport {
    let included: Vec<&RankedQueryResult> = results
        .iter()
        .filter(|r| options.include_no_positive || r.n_positives > 0)
        .collect();
    excluded.no_positive = results.iter().filter(|r| r.n_positives == 0).count();
    if options.include_no_positive {
        excluded.no_positive_metrics = excluded.no_positive;
    }
    let mut pr_at = BTreeMap::new();
    let mut pr_at_normalized = BTreeMap::new();
    for n in 1..=options.n_max {
        let mean = if included.is_empty() {
            0.0
        } else {
            included.iter().map(|r| precision_at_n(r, n) as f64).sum::<f64>() / included.len() as f64
        };
        pr_at.insert(n, mean);
        pr_at_normalized.insert(n, mean / n as f64);
    }
    let gaps: Vec<f64> = included.iter().filter_map(|r| avg_rank_gap(r)).collect();
    excluded.arg_no_negative = included
        .iter()
        .filter(|r| r.n_positives > 0 && r.n_negatives == 0)
        .count();
    let arg = if gaps.is_empty() {
        None
    } else {
        Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
    };
    let owned: Vec<RankedQueryResult> = included.iter().map(|r| (*r).clone()).collect();
    let (afp, _) = avg_first_position(&owned);
    EvalReport {
        ranker: ranker.to_string(),
        pr_at,
        pr_at_normalized,
        arg,
        afp,
        n_queries: included.len(),
        pool_size,
        excluded,
        aggregation: "per-query mean".into(),
        notes: Vec::new(),
        config: serde_json::Value::Null,
        config_digest: String::new(),
    }
}

/// Something that orders the whole pool for a query.
pub trait Ranker: Sync {
    fn name(&self) -> String;
    /// Full ranking of the pool; `None` when the query cannot be ranked.
    fn rank(&self, query: &CodeSample) -> Result<Option<Vec<SearchHit>>>;
    /// Pool samples the ranker cannot score.
    fn excluded_pool(&self) -> usize {
        0
    }
}

/// The trained dual encoder over a prebuilt index of the pool.
pub struct EncoderRanker<'a> {
    pub index: SearchIndex,
    pub params_q: &'a EncoderParams,
    pub provider: &'a dyn BaseEmbeddings,
    pub similarity: SimilarityKind,
}

impl<'a> EncoderRanker<'a> {
    pub fn new(
        pool: &[CodeSample],
        params_q: &'a EncoderParams,
        params_d: &EncoderParams,
        provider: &'a dyn BaseEmbeddings,
        similarity: SimilarityKind,
    ) -> Result<Self> {
        Ok(EncoderRanker {
            index: build_index(pool, params_d, provider)?,
            params_q,
            provider,
            similarity,
        })
    }
}

impl Ranker for EncoderRanker<'_> {
    fn name(&self) -> String {
        "dual-encoder".into()
    }

    fn rank(&self, query: &CodeSample) -> Result<Option<Vec<SearchHit>>> {
        let q = query_vector(query, self.params_q, self.provider)?;
        self.index.search_vector(&q, self.index.len().max(1), self.similarity).map(Some)
    }
}

pub struct Bm25Ranker {
    index: Bm25Index,
    size: usize,
}

impl Bm25Ranker {
    pub fn new(pool: &[CodeSample]) -> Result<Self> {
        Ok(Bm25Ranker {
            index: Bm25Index::new(pool, Bm25Params::default())?,
            size: pool.len(),
        })
    }
}

impl Ranker for Bm25Ranker {
    fn name(&self) -> String {
        "bm25".into()
    }

    fn rank(&self, query: &CodeSample) -> Result<Option<Vec<SearchHit>>> {
        Ok(Some(self.index.rank(query, self.size)))
    }
}

pub struct AstRanker {
    pool: Vec<CodeSample>,
    degenerate: bool,
}

impl AstRanker {
    pub fn new(pool: &[CodeSample], degenerate: bool) -> Self {
        AstRanker {
            pool: pool.to_vec(),
            degenerate,
        }
    }
}

impl Ranker for AstRanker {
    fn name(&self) -> String {
        "ast-ted".into()
    }

    fn rank(&self, query: &CodeSample) -> Result<Option<Vec<SearchHit>>> {
        let r = ast_rank(&self.pool, query, self.pool.len().max(1), self.degenerate);
        Ok((!r.query_excluded).then_some(r.hits))
    }

    fn excluded_pool(&self) -> usize {
        self.pool
            .iter()
            .filter(|s| crate::baselines::sample_ast(s, self.degenerate).is_none())
            .count()
    }
}

/// Queries and pool for a split and language pair.
pub fn queries_and_pool<'a>(
    split: &'a DatasetSplit,
    source_lang: &'a str,
    target_lang: &'a str,
) -> (Vec<&'a CodeSample>, Vec<CodeSample>) {
    let mut queries: Vec<&CodeSample> = split.samples_in(source_lang).collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pool: Vec<CodeSample> = split.samples_in(target_lang).cloned().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    (queries, pool)
}

/// Rank every query with `ranker` and aggregate.
///
/// The query itself is removed from its own ranking when source and target
/// language coincide.
pub fn evaluate_with(
    ranker: &dyn Ranker,
    queries: &[&CodeSample],
    pool: &[CodeSample],
    options: EvalOptions,
) -> Result<EvalReport> {
    if pool.is_empty() {
        return Err(Error::config("evaluation pool is empty"));
    }
    if options.n_max == 0 {
        return Err(Error::config("eval n_max must be at least 1"));
    }
    let problem: HashMap<&str, &str> = pool.iter().map(|s| (s.id.as_str(), s.problem_id.as_str())).collect();
    let ranked: Vec<Option<RankedQueryResult>> = queries
        .par_iter()
        .map(|q| {
            let Some(hits) = ranker.rank(q)? else {
                return Ok(None);
            };
            let ranking = hits
                .into_iter()
                .filter(|h| h.sample_id != q.id)
                .map(|h| {
                    let positive = problem.get(h.sample_id.as_str()) == Some(&q.problem_id.as_str());
                    (h.sample_id, positive)
                })
                .collect();
            Ok(Some(RankedQueryResult::new(q.id.clone(), ranking)))
        })
        .collect::<Result<_>>()?;
    let excluded = Exclusions {
        ranker_queries: ranked.iter().filter(|r| r.is_none()).count(),
        ranker_pool: ranker.excluded_pool(),
        ..Exclusions::default()
    };
    let results: Vec<RankedQueryResult> = ranked.into_iter().flatten().collect();
    Ok(aggregate(&ranker.name(), &results, pool.len(), options, excluded))
}

/// Evaluate trained encoders on a split.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    split: &DatasetSplit,
    source_lang: &str,
    target_lang: &str,
    params_q: &EncoderParams,
    params_d: &EncoderParams,
    provider: &dyn BaseEmbeddings,
    options: EvalOptions,
) -> Result<EvalReport> {
    let (queries, pool) = queries_and_pool(split, source_lang, target_lang);
    if pool.is_empty() {
        return Err(Error::config(format!(
            "no {target_lang} samples in the {} split to search",
            split.name
        )));
    }
    let ranker = EncoderRanker::new(&pool, params_q, params_d, provider, SimilarityKind::AbsCosine)?;
    evaluate_with(&ranker, &queries, &pool, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: bool = true;
    const N: bool = false;

    #[test]
    fn precision_by_inspection() {
        let r = RankedQueryResult::from_flags("q", &[P, N, P, N, N]);
        assert_eq!(precision_at_n(&r, 1), 1);
        assert_eq!(precision_at_n(&r, 3), 2);
        assert_eq!(precision_at_n(&r, 50), 2);
        let none = RankedQueryResult::from_flags("q", &[N, N]);
        assert_eq!(precision_at_n(&none, 2), 0);
    }

    #[test]
    fn rank_gap_examples() {
        assert_eq!(avg_rank_gap(&RankedQueryResult::from_flags("q", &[P, P, N, N])), Some(2.0));
        assert_eq!(avg_rank_gap(&RankedQueryResult::from_flags("q", &[P, N, P, N])), Some(1.0));
        assert_eq!(avg_rank_gap(&RankedQueryResult::from_flags("q", &[P, P])), None);
    }

    #[test]
    fn first_position_examples() {
        let a = RankedQueryResult::from_flags("a", &[P, N]);
        let b = RankedQueryResult::from_flags("b", &[N, N, P]);
        let c = RankedQueryResult::from_flags("c", &[N]);
        assert_eq!(avg_first_position(&[a.clone(), b.clone()]), (Some(2.0), 0));
        assert_eq!(avg_first_position(&[a, b, c]), (Some(2.0), 1));
    }

    #[test]
    fn aggregation_counts_exclusions() {
        let results = vec![
            RankedQueryResult::from_flags("a", &[P, N, N]),
            RankedQueryResult::from_flags("b", &[N, N, N]),
            RankedQueryResult::from_flags("c", &[P, P, P]),
        ];
        let r = aggregate("t", &results, 3, EvalOptions::default(), Exclusions::default());
        assert_eq!(r.n_queries, 2);
        assert_eq!(r.excluded.no_positive, 1);
        assert_eq!(r.excluded.arg_no_negative, 1);
        assert_eq!(r.pr_at[&1], 1.0);
        assert_eq!(r.pr_at[&3], 2.0);
        assert_eq!(r.arg, Some(1.5));
        assert_eq!(r.afp, Some(1.0));
        let with = aggregate(
            "t",
            &results,
            3,
            EvalOptions {
                include_no_positive: true,
                ..EvalOptions::default()
            },
            Exclusions::default(),
        );
        assert_eq!(with.n_queries, 3);
        assert!((with.pr_at[&1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(with.afp, Some(1.0));
    }
}
