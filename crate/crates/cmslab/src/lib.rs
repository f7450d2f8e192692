//! Workbench for conservative count-min sketches with a variable number of
//! hash functions per element.
//!
//! The pieces compose as a pipeline:
//!
//! - [`hashspace`]: k-spec parsing and simulated fully-random hash draws
//!   (elements are abstract ids whose hash values are drawn once, seeded).
//! - [`hypergraph`]: the resulting hash hypergraph, its load factor, and the
//!   peeling process whose completion separates the small-error regime from
//!   the constant-error one.
//! - [`sketch`]: the counter array under basic or conservative update.
//! - [`streams`]: uniform / step / Zipf input models with deterministic
//!   i.i.d. sampling.
//! - [`metrics`]: occurrence-weighted error, per-class error, rank profiles,
//!   counter saturation statistics.
//! - [`experiments`]: seeded parameter sweeps that tie it all together into
//!   deterministic long-format CSV tables.
//! - [`cli`]: the `cmslab` binary.
//!
//! Everything downstream of a seed is reproducible: rerunning any experiment
//! with the same configuration yields byte-identical CSV, regardless of the
//! worker thread count.

pub mod cli;
pub mod experiments;
pub mod hashspace;
pub mod hypergraph;
pub mod metrics;
pub mod selftest;
pub mod sketch;
pub mod streams;
mod util;

pub use hashspace::{build_hypergraph, plan_cardinalities, EdgePlan, KSpec};
pub use hypergraph::{is_peelable, peel, HashHypergraph, PeelReport};
pub use metrics::{
    class_error, combined_error, counter_stats, rank_profile, relative_error, CounterStats,
    ErrorSummary,
};
pub use sketch::{run_stream, Discipline, Sketch};
pub use streams::{sample_stream, Distribution, Sampler, StreamSpec};
