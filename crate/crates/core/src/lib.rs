//! Training and evaluation toolkit for joint word/tag/track embeddings.
//!
//! The pipeline has four stages:
//!
//! 1. [`corpus`] ingests a general text corpus and a per-track music corpus
//!    (reviews, tags, artist/track IDs), builds a single vocabulary over all
//!    of them, and streams skip-gram training pairs.
//! 2. [`sgns`] trains the word embedding with skip-gram negative sampling
//!    (lock-free parallel SGD across workers).
//! 3. [`joint`] learns an audio-word joint space on top of the frozen word
//!    embedding with a max-margin triplet loss and tag/artist/track
//!    supervision.
//! 4. [`eval`] scores tag rank prediction, query-by-tag, query-by-track, and
//!    tagging, including the generalized zero-shot split.
//!
//! [`embedding`] holds the published word embedding (queries and file I/O)
//! and [`features`] the audio front-end (log-mel extraction and clip
//! summaries). [`synth`] generates small synthetic worlds used by the test
//! suites and benchmarks.

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod features;
pub mod joint;
pub mod rng;
pub mod sgns;
pub mod synth;

mod error;

pub use error::{Error, Result};
