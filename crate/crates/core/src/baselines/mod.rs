//! Searchers that need no training: BM25 over tokens and tree edit distance
//! over generic ASTs.

pub mod ast;
mod bm25;
mod ted;

pub use ast::{GenericAst, NodeKind};
pub use bm25::{bm25_rank, Bm25Index, Bm25Params};
pub use ted::{ast_rank, ast_similarity, prepared_distance, sample_ast, tree_edit_distance, AstRanking, PreparedTree};
