use std::collections::HashMap;

use proptest::prelude::*;

use xlsearch_core::baselines::*;
use xlsearch_core::corpus::CodeSample;
use xlsearch_core::embedding::tokenize;

fn tree_strategy() -> impl Strategy<Value = GenericAst> {
    let leaf = (0usize..3, 0usize..3).prop_map(|(k, l)| {
        GenericAst::leaf([NodeKind::Identifier, NodeKind::Literal, NodeKind::Call][k], ["a", "b", "c"][l])
    });
    leaf.prop_recursive(3, 8, 3, |inner| {
        (0usize..3, prop::collection::vec(inner, 1..=3)).prop_map(|(k, children)| {
            GenericAst::node([NodeKind::Call, NodeKind::If, NodeKind::Other][k], None, children)
        })
    })
    .prop_filter("at most 8 nodes", |t| t.size() <= 8)
}

/// Forest edit distance by the rightmost-root recursion, memoized on the
/// serialized forests.
struct Oracle {
    memo: HashMap<(String, String), usize>,
}

fn key(f: &[GenericAst]) -> String {
    f.iter().map(GenericAst::to_sexpr).collect::<Vec<_>>().join(" ")
}

fn without_root(f: &[GenericAst]) -> Vec<GenericAst> {
    let (last, rest) = f.split_last().unwrap();
    let mut out = rest.to_vec();
    out.extend(last.children.iter().cloned());
    out
}

impl Oracle {
    fn distance(&mut self, f: &[GenericAst], g: &[GenericAst]) -> usize {
        if f.is_empty() && g.is_empty() {
            return 0;
        }
        let k = (key(f), key(g));
        if let Some(&d) = self.memo.get(&k) {
            return d;
        }
        let d = if g.is_empty() {
            self.distance(&without_root(f), g) + 1
        } else if f.is_empty() {
            self.distance(f, &without_root(g)) + 1
        } else {
            let (v, fr) = f.split_last().unwrap();
            let (w, gr) = g.split_last().unwrap();
            let delete = self.distance(&without_root(f), g) + 1;
            let insert = self.distance(f, &without_root(g)) + 1;
            let relabel = usize::from(!(v.kind == w.kind && v.label == w.label));
            let matched = self.distance(fr, gr) + self.distance(&v.children, &w.children) + relabel;
            delete.min(insert).min(matched)
        };
        self.memo.insert(k, d);
        d
    }
}

fn oracle_distance(a: &GenericAst, b: &GenericAst) -> usize {
    Oracle { memo: HashMap::new() }.distance(std::slice::from_ref(a), std::slice::from_ref(b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn zhang_shasha_matches_recursive_oracle(a in tree_strategy(), b in tree_strategy()) {
        prop_assert_eq!(tree_edit_distance(&a, &b), oracle_distance(&a, &b));
    }

    #[test]
    fn distance_is_a_metric(a in tree_strategy(), b in tree_strategy(), c in tree_strategy()) {
        let ab = tree_edit_distance(&a, &b);
        prop_assert_eq!(tree_edit_distance(&a, &a), 0);
        prop_assert_eq!(ab, tree_edit_distance(&b, &a));
        prop_assert!(tree_edit_distance(&a, &c) <= ab + tree_edit_distance(&b, &c));
        prop_assert_eq!(ab == 0, a == b);
    }

    #[test]
    fn sexpr_round_trips(a in tree_strategy()) {
        prop_assert_eq!(GenericAst::parse(&a.to_sexpr()).unwrap(), a);
    }
}

fn doc(id: &str, text: &str) -> CodeSample {
    CodeSample::new(id, "toy", "p", text)
}

fn hand_corpus() -> Vec<CodeSample> {
    ["a b c", "a a d", "b e", "c c c a", "f"]
        .iter()
        .enumerate()
        .map(|(i, t)| doc(&format!("d{}", i + 1), t))
        .collect()
}

#[test]
fn bm25_matches_hand_computed_scores() {
    // k1 = 1.2, b = 0.75, avgdl = 13/5, idf = ln(1 + (N − n + 0.5)/(n + 0.5)).
    let idx = Bm25Index::new(&hand_corpus(), Bm25Params::default()).unwrap();
    let cases: [(&str, [f64; 5]); 3] = [
        ("a c", [1.330714006884092, 0.7103824848366292, 0.0, 1.6751181474131656, 0.0]),
        ("b", [0.8236317726421559, 0.0, 0.9667338180819126, 0.0, 0.0]),
        ("c c e f", [0.8236317726421559, 0.0, 1.5308115339007287, 1.2334190092769233, 1.852711155515368]),
    ];
    for (q, expected) in cases {
        for (got, want) in idx.scores(q).iter().zip(expected) {
            assert!((got - want).abs() <= 1e-9, "{q}: {got} vs {want}");
        }
    }
}

/// BM25 straight from the definition over a token list per document.
fn bm25_oracle(docs: &[Vec<String>], query: &[String]) -> Vec<f64> {
    let n_docs = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n_docs;
    let mut terms = query.to_vec();
    terms.sort();
    terms.dedup();
    docs.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in &terms {
                let n = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let idf = (1.0 + (n_docs - n + 0.5) / (n + 0.5)).ln();
                let tf = d.iter().filter(|x| *x == t).count() as f64;
                let rel = if avgdl > 0.0 { d.len() as f64 / avgdl } else { 1.0 };
                s += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * rel));
            }
            s
        })
        .collect()
}

fn token_docs() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["x", "y", "z", "w", "v"]), 0..7), 1..8)
        .prop_map(|docs| docs.into_iter().map(|d| d.join(" ")).collect())
}

proptest! {
    #[test]
    fn bm25_matches_definition_and_is_nonnegative(texts in token_docs(), q in "[xyzq ]{0,12}") {
        let corpus: Vec<_> = texts.iter().enumerate().map(|(i, t)| doc(&format!("d{i}"), t)).collect();
        let idx = Bm25Index::new(&corpus, Bm25Params::default()).unwrap();
        let toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t).collect()).collect();
        let oracle = bm25_oracle(&toks, &tokenize(&q).collect::<Vec<_>>());
        for (got, want) in idx.scores(&q).iter().zip(&oracle) {
            prop_assert!(*got >= 0.0);
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn adding_a_document_only_moves_idf_and_length_terms(texts in token_docs(), extra in "[xyz ]{1,10}", q in "[xyz ]{1,8}") {
        let mut corpus: Vec<_> = texts.iter().enumerate().map(|(i, t)| doc(&format!("d{i}"), t)).collect();
        corpus.push(doc("extra", &extra));
        let idx = Bm25Index::new(&corpus, Bm25Params::default()).unwrap();
        let mut toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t).collect()).collect();
        toks.push(tokenize(&extra).collect());
        let oracle = bm25_oracle(&toks, &tokenize(&q).collect::<Vec<_>>());
        for (got, want) in idx.scores(&q).iter().zip(&oracle) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }
}

#[test]
fn identical_document_is_not_always_the_maximum() {
    // Higher term frequency can outweigh length normalization.
    let corpus = [doc("one", "b"), doc("two", "b b")];
    let hits = bm25_rank(&corpus, &corpus[0], 2).unwrap();
    assert_eq!(hits[0].sample_id, "two");
    // With one occurrence per term everywhere the copy does win.
    let corpus = [doc("q", "alpha beta"), doc("o", "alpha gamma delta"), doc("r", "beta")];
    assert_eq!(bm25_rank(&corpus, &corpus[0], 1).unwrap()[0].sample_id, "q");
}

#[test]
fn bm25_disjoint_query_scores_zero_everywhere() {
    let hits = bm25_rank(&hand_corpus(), &doc("q", "zzz yyy"), 5).unwrap();
    assert!(hits.iter().all(|h| h.score == 0.0));
    let ids: Vec<_> = hits.iter().map(|h| h.sample_id.as_str()).collect();
    assert_eq!(ids, ["d1", "d2", "d3", "d4", "d5"]);
}

fn ast_corpus() -> Vec<CodeSample> {
    let trees = [
        "(module (call:add (identifier:x) (literal:1)))",
        "(module (call:add (identifier:x) (literal:2)))",
        "(module (if (call:lt (identifier:x) (literal:0)) (identifier:x) (literal:0)))",
        "(module (assign:let (identifier:y) (identifier:x)) (identifier:y))",
        "(module (identifier:x))",
    ];
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| doc(&format!("t{i}"), "unused").with_ast(GenericAst::parse(t).unwrap()))
        .collect()
}

#[test]
fn ast_ranking_matches_exhaustive_distances() {
    let corpus = ast_corpus();
    for q in &corpus {
        let r = ast_rank(&corpus, q, corpus.len(), false);
        let mut oracle: Vec<(String, f64)> = corpus
            .iter()
            .map(|s| {
                let d = oracle_distance(q.ast.as_ref().unwrap(), s.ast.as_ref().unwrap());
                (s.id.clone(), 1.0 / (1.0 + d as f64))
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let got: Vec<(String, f64)> = r.hits.iter().map(|h| (h.sample_id.clone(), h.score)).collect();
        assert_eq!(got, oracle);
        assert_eq!(r.hits[0].sample_id, q.id);
        assert_eq!(r.hits[0].score, 1.0);
    }
}

#[test]
fn all_asts_missing_gives_empty_ranking_and_report() {
    let corpus = [doc("a", "x"), doc("b", "y")];
    let r = ast_rank(&corpus, &corpus[0], 5, false);
    assert!(r.hits.is_empty());
    assert!(r.query_excluded);
    assert_eq!(r.excluded, ["a", "b"]);
}
