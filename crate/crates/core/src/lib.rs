//! Corpus curation toolkit: minhash near-duplicate detection, duplication
//! statistics, duplicate-aware subsampling, quality-driven document count
//! manipulation and repetition/weight-decay budget planning.
//!
//! Every stage reads and writes the same sharded JSONL corpus format (see
//! [`corpus_io`]) so stages compose from the command line. Randomness is
//! always derived from `(seed, document id, trial)` through [`keyed`], which
//! makes outputs independent of iteration order and worker count.

pub mod budget_planner;
pub mod corpus_io;
pub mod count_manipulation;
pub mod error;
pub mod keyed;
pub mod minhash_dedup;
pub mod sampling;
pub mod stats_report;
mod union_find;

pub use corpus_io::{CorpusManifest, DocId, Document, TokenizerMode};
pub use error::{Error, Result};
pub use minhash_dedup::{ClusterKind, ClusterMode, DuplicateClusterTable, LshParams};
