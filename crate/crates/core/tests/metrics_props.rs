use proptest::prelude::*;

use xlsearch_core::corpus::{CodeSample, DatasetSplit, SplitName};
use xlsearch_core::embedding::{EmbeddingProvider, Featurizer};
use xlsearch_core::eval::*;
use xlsearch_core::search::{build_index, query};
use xlsearch_core::trainer::EncoderParams;

// Oracles written from the metric definitions, by explicit rank lists.

fn oracle_precision(flags: &[bool], n: usize) -> usize {
    let mut count = 0;
    for (i, &p) in flags.iter().enumerate() {
        if i < n && p {
            count += 1;
        }
    }
    count
}

fn oracle_gap(flags: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = (1..=flags.len()).filter(|&r| flags[r - 1]).map(|r| r as f64).collect();
    let neg: Vec<f64> = (1..=flags.len()).filter(|&r| !flags[r - 1]).map(|r| r as f64).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(mean(&neg) - mean(&pos))
}

fn oracle_first(flags: &[bool]) -> Option<usize> {
    for r in 1..=flags.len() {
        if flags[r - 1] {
            return Some(r);
        }
    }
    None
}

fn rankings() -> impl Strategy<Value = Vec<Vec<bool>>> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), 2..=50), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kernels_match_oracles(flags in prop::collection::vec(any::<bool>(), 2..=50)) {
        let r = RankedQueryResult::from_flags("q", &flags);
        let mut last = 0;
        for n in 1..=flags.len() + 2 {
            let p = precision_at_n(&r, n);
            prop_assert_eq!(p, oracle_precision(&flags, n));
            prop_assert!(p >= last);
            last = p;
        }
        prop_assert_eq!(avg_rank_gap(&r), oracle_gap(&flags));
        prop_assert_eq!(first_positive(&r), oracle_first(&flags));
        let m = flags.len() as f64;
        if let Some(g) = avg_rank_gap(&r) {
            prop_assert!(-(m - 1.0) < g + 1e-12 && g < m);
        }
    }

    #[test]
    fn report_matches_oracle_means(sets in rankings()) {
        let results: Vec<_> = sets
            .iter()
            .enumerate()
            .map(|(i, f)| RankedQueryResult::from_flags(format!("q{i}"), f))
            .collect();
        let report = aggregate("oracle", &results, 50, EvalOptions::default(), Exclusions::default());
        let kept: Vec<&Vec<bool>> = sets.iter().filter(|f| f.contains(&true)).collect();
        prop_assert_eq!(report.n_queries, kept.len());
        prop_assert_eq!(report.excluded.no_positive, sets.len() - kept.len());
        let mut prev = 0.0;
        for n in 1..=5 {
            let expected = if kept.is_empty() {
                0.0
            } else {
                kept.iter().map(|f| oracle_precision(f, n) as f64).sum::<f64>() / kept.len() as f64
            };
            prop_assert_eq!(report.pr_at[&n], expected);
            prop_assert!(report.pr_at[&n] >= prev);
            prev = report.pr_at[&n];
        }
        let gaps: Vec<f64> = kept.iter().filter_map(|f| oracle_gap(f)).collect();
        let arg = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        prop_assert_eq!(report.arg, arg);
        let firsts: Vec<usize> = kept.iter().filter_map(|f| oracle_first(f)).collect();
        let afp = (!firsts.is_empty()).then(|| firsts.iter().sum::<usize>() as f64 / firsts.len() as f64);
        prop_assert_eq!(report.afp, afp);
        if let Some(a) = report.afp {
            prop_assert!(a >= 1.0);
        }
    }
}

#[test]
fn afp_examples() {
    let a = RankedQueryResult::from_flags("a", &[true, false, false]);
    let b = RankedQueryResult::from_flags("b", &[false, false, true]);
    assert_eq!(avg_first_position(&[a.clone(), a.clone()]), (Some(1.0), 0));
    assert_eq!(avg_first_position(&[a, b]), (Some(2.0), 0));
    let none = RankedQueryResult::from_flags("c", &[false, false]);
    assert_eq!(avg_first_position(&[none]), (None, 1));
}

#[test]
fn gap_examples() {
    let r = RankedQueryResult::from_flags("q", &[true, true, false, false]);
    assert_eq!(avg_rank_gap(&r), Some(2.0));
    let r = RankedQueryResult::from_flags("q", &[true, false, true, false]);
    assert_eq!(avg_rank_gap(&r), Some(1.0));
}

fn split(samples: Vec<CodeSample>) -> DatasetSplit {
    DatasetSplit {
        name: SplitName::Test,
        problems: samples.iter().map(|s| s.problem_id.clone()).collect(),
        samples,
    }
}

fn small_pool() -> Vec<CodeSample> {
    let mut out = Vec::new();
    for p in 0..4 {
        for (lang, word) in [("src", "alpha"), ("dst", "beta")] {
            for i in 0..3 {
                out.push(CodeSample::new(
                    format!("p{p}/{lang}/{i}"),
                    lang,
                    format!("p{p}"),
                    format!("{word} token{p} shared{i} extra{}", (p + i) % 3),
                ));
            }
        }
    }
    out
}

#[test]
fn evaluation_uses_search_rankings_exactly() {
    let test = split(small_pool());
    let provider = EmbeddingProvider::Featurizer(Featurizer::new(32, 7).unwrap());
    let id = EncoderParams::identity(32);
    let report = evaluate(&test, "src", "dst", &id, &id, &provider, EvalOptions::default()).unwrap();

    // Re-rank every query with the search module and aggregate by hand.
    let (queries, pool) = queries_and_pool(&test, "src", "dst");
    let index = build_index(&pool, &id, &provider).unwrap();
    let mut results = Vec::new();
    for q in &queries {
        let hits = query(&index, q, &id, &provider, pool.len()).unwrap();
        assert_eq!(hits.len(), pool.len());
        let ranking = hits
            .iter()
            .map(|h| (h.sample_id.clone(), h.sample_id.split('/').next() == Some(q.problem_id.as_str())))
            .collect();
        results.push(RankedQueryResult::new(q.id.clone(), ranking));
    }
    let oracle = aggregate("dual-encoder", &results, pool.len(), EvalOptions::default(), Exclusions::default());
    assert_eq!(report.pr_at, oracle.pr_at);
    assert_eq!(report.arg, oracle.arg);
    assert_eq!(report.afp, oracle.afp);
    assert_eq!(report.n_queries, 12);
    assert_eq!(report.pool_size, 12);
}

#[test]
fn duplicate_positives_give_perfect_scores() {
    // Each query's same-problem pool entries are copies of its text.
    let mut samples = Vec::new();
    for p in 0..5 {
        let text = format!("unique{p} body{p} marker{}", p * 7);
        samples.push(CodeSample::new(format!("p{p}/a/0"), "a", format!("p{p}"), text.clone()));
        samples.push(CodeSample::new(format!("p{p}/b/0"), "b", format!("p{p}"), text));
    }
    let test = split(samples);
    let provider = EmbeddingProvider::Featurizer(Featurizer::new(64, 0).unwrap());
    let id = EncoderParams::identity(64);
    let r = evaluate(&test, "a", "b", &id, &id, &provider, EvalOptions::default()).unwrap();
    assert_eq!(r.pr_at[&1], 1.0);
    assert_eq!(r.afp, Some(1.0));
}

#[test]
fn single_problem_pool_has_no_gap() {
    let samples: Vec<_> = (0..3)
        .flat_map(|i| {
            ["a", "b"].map(|l| CodeSample::new(format!("p/{l}/{i}"), l, "p", format!("tok{i} {l}")))
        })
        .collect();
    let test = split(samples);
    let provider = EmbeddingProvider::Featurizer(Featurizer::new(16, 0).unwrap());
    let id = EncoderParams::identity(16);
    let r = evaluate(&test, "a", "b", &id, &id, &provider, EvalOptions::default()).unwrap();
    assert_eq!(r.arg, None);
    assert_eq!(r.excluded.arg_no_negative, 3);
}

#[test]
fn queries_without_positives_are_counted() {
    let mut samples = small_pool();
    samples.push(CodeSample::new("lonely/src/0", "src", "lonely", "alpha nothing"));
    let test = split(samples);
    let provider = EmbeddingProvider::Featurizer(Featurizer::new(32, 1).unwrap());
    let id = EncoderParams::identity(32);
    let default = evaluate(&test, "src", "dst", &id, &id, &provider, EvalOptions::default()).unwrap();
    assert_eq!(default.n_queries, 12);
    assert_eq!(default.excluded.no_positive, 1);
    let options = EvalOptions {
        include_no_positive: true,
        ..EvalOptions::default()
    };
    let kept = evaluate(&test, "src", "dst", &id, &id, &provider, options).unwrap();
    assert_eq!(kept.n_queries, 13);
    assert!(kept.pr_at[&1] <= default.pr_at[&1]);
}

#[test]
fn empty_pool_is_fatal() {
    let test = split(vec![CodeSample::new("p/a/0", "a", "p", "x")]);
    let provider = EmbeddingProvider::Featurizer(Featurizer::new(16, 0).unwrap());
    let id = EncoderParams::identity(16);
    assert!(evaluate(&test, "a", "b", &id, &id, &provider, EvalOptions::default()).is_err());
}
