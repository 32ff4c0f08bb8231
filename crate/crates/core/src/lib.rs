//! Cross-language code-to-code search.
//!
//! Two encoders are trained over frozen base embeddings so that a query in
//! one language lands near the solutions of the same problem in another.
//! Training targets blend the static same-problem label with a score of how
//! often two programs agree on shared random inputs. Search runs over a
//! precomputed index and never executes code.

pub mod baselines;
pub mod codec;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod search;
pub mod sss;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
