//! Semantic similarity from input/output behavior: programs sharing an input
//! structure are run on a common random corpus and scored by how often their
//! outputs agree.

mod runner;
mod structure;
mod table;
pub mod toy;

pub use runner::{
    run_sample, values_match, ExecStatus, ExecutionResult, LanguageRunner, RunnerConfig, SampleRunner, BUILTIN_TOY,
    FLOAT_TOLERANCE,
};
pub use structure::{corpus_seed, generate_inputs, InputCorpus, InputStructure, TypeTag, MAX_DEPTH};
pub use table::{build_sss_table, semantic_similarity, CorpusProvider, SssBuild, SssConfig, SssStats, SssTable};
