//! Shortest-path reasoning benchmarks on layered DAGs.
//!
//! The crate covers the whole data side of the benchmark:
//!
//! - [`graphgen`] samples random layered graphs with integer edge costs.
//! - [`solver`] solves them exactly (dynamic programming plus a brute-force
//!   enumerator used as an oracle).
//! - [`tracegen`] emits step-by-step reasoning traces from a weighted
//!   exploration queue whose ordering is controlled by a temperature `eta`,
//!   with optional redundancy injection.
//! - [`tokenlang`] serializes questions, traces and answers into a closed
//!   token language and parses them back.
//! - [`evalmetrics`] scores arbitrary generated token sequences.
//! - [`corpus`] builds reproducible JSONL train/test corpora and statistics.

pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod graphgen;
pub mod seed;
pub mod solver;
pub mod tokenlang;
pub mod tracegen;

pub use error::{Error, Result};
pub use graphgen::{GraphParams, LayeredGraph};
pub use tracegen::{Trace, TraceMode, TraceStep};
