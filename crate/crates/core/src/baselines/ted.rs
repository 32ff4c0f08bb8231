//! Zhang–Shasha tree edit distance with unit costs, and ranking by it.

use std::borrow::Cow;

use rayon::prelude::*;

use super::ast::GenericAst;
use crate::corpus::CodeSample;
use crate::search::{top_hits, SearchHit};

/// A tree flattened to postorder with leftmost-leaf indices and keyroots,
/// all 1-based.
#[derive(Debug, Clone)]
pub struct PreparedTree<'a> {
    nodes: Vec<&'a GenericAst>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> PreparedTree<'a> {
    pub fn new(root: &'a GenericAst) -> Self {
        let mut nodes = vec![root];
        let mut leftmost = vec![0];

        fn walk<'a>(t: &'a GenericAst, nodes: &mut Vec<&'a GenericAst>, leftmost: &mut Vec<usize>) -> usize {
            let mut first = None;
            for c in &t.children {
                let l = walk(c, nodes, leftmost);
                first.get_or_insert(l);
            }
            nodes.push(t);
            let me = nodes.len() - 1;
            let l = first.unwrap_or(me);
            leftmost.push(l);
            l
        }
        // Index 0 is padding so postorder positions start at 1.
        walk(root, &mut nodes, &mut leftmost);

        let n = nodes.len() - 1;
        let mut keyroots = Vec::new();
        for i in 1..=n {
            if !(i + 1..=n).any(|j| leftmost[j] == leftmost[i]) {
                keyroots.push(i);
            }
        }
        PreparedTree {
            nodes,
            leftmost,
            keyroots,
        }
    }

    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Minimum number of node insertions, deletions and relabels turning one
/// prepared tree into the other.
pub fn prepared_distance(a: &PreparedTree<'_>, b: &PreparedTree<'_>) -> usize {
    let (n1, n2) = (a.size(), b.size());
    let mut td = vec![vec![0usize; n2 + 1]; n1 + 1];
    let mut fd = vec![vec![0usize; n2 + 2]; n1 + 2];
    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            let (ioff, joff) = (li - 1, lj - 1);
            let (m, n) = (i - ioff, j - joff);
            fd[0][0] = 0;
            for x in 1..=m {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..=n {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..=m {
                let i1 = x + ioff;
                for y in 1..=n {
                    let j1 = y + joff;
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if a.leftmost[i1] == li && b.leftmost[j1] == lj {
                        let relabel = usize::from(!a.nodes[i1].same_label(b.nodes[j1]));
                        let v = del.min(ins).min(fd[x - 1][y - 1] + relabel);
                        fd[x][y] = v;
                        td[i1][j1] = v;
                    } else {
                        let p = a.leftmost[i1] - 1 - ioff;
                        let q = b.leftmost[j1] - 1 - joff;
                        fd[x][y] = del.min(ins).min(fd[p][q] + td[i1][j1]);
                    }
                }
            }
        }
    }
    td[n1][n2]
}

pub fn tree_edit_distance(a: &GenericAst, b: &GenericAst) -> usize {
    prepared_distance(&PreparedTree::new(a), &PreparedTree::new(b))
}

/// `1 / (1 + d)`.
pub fn ast_similarity(distance: usize) -> f64 {
    1.0 / (1.0 + distance as f64)
}

/// Hits plus the samples that could not take part for lack of an AST.
#[derive(Debug, Clone, PartialEq)]
pub struct AstRanking {
    pub hits: Vec<SearchHit>,
    /// Corpus samples skipped, in corpus order.
    pub excluded: Vec<String>,
    /// The query itself had no AST, so nothing was ranked.
    pub query_excluded: bool,
}

/// The sample's sidecar AST, or the flat token tree when `degenerate` is
/// enabled.
pub fn sample_ast(sample: &CodeSample, degenerate: bool) -> Option<Cow<'_, GenericAst>> {
    match &sample.ast {
        Some(t) => Some(Cow::Borrowed(t)),
        None if degenerate => Some(Cow::Owned(GenericAst::degenerate(&sample.text))),
        None => None,
    }
}

/// Rank the corpus by tree edit distance to the query.
pub fn ast_rank(corpus: &[CodeSample], query: &CodeSample, n: usize, degenerate: bool) -> AstRanking {
    let trees: Vec<Option<Cow<'_, GenericAst>>> = corpus.iter().map(|s| sample_ast(s, degenerate)).collect();
    let excluded: Vec<String> = corpus
        .iter()
        .zip(&trees)
        .filter(|(_, t)| t.is_none())
        .map(|(s, _)| s.id.clone())
        .collect();
    let Some(q_tree) = sample_ast(query, degenerate) else {
        return AstRanking {
            hits: Vec::new(),
            excluded,
            query_excluded: true,
        };
    };
    let q = PreparedTree::new(&q_tree);
    let scored: Vec<(String, f64)> = corpus
        .par_iter()
        .zip(&trees)
        .filter_map(|(s, t)| {
            let t = t.as_ref()?;
            let d = prepared_distance(&q, &PreparedTree::new(t));
            Some((s.id.clone(), ast_similarity(d)))
        })
        .collect();
    AstRanking {
        hits: top_hits(scored, n),
        excluded,
        query_excluded: false,
    }
}
