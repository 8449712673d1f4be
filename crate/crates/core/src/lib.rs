//! Point-of-compromise detection on card/location transaction graphs.
//!
//! Cards and candidate locations (terminal-week buckets) form a bipartite
//! graph. Fraud-cards spread blame over the locations they visited, each
//! location's compromise probability is the Beta posterior mean of the blame
//! it receives, and the two are updated alternately until the probabilities
//! stop moving.
//!
//! The crate is organised as:
//!
//! - [`graph`]: transaction ingestion, terminal-week bucketing and the
//!   filtered bipartite graph (plus its binary snapshot format).
//! - [`detector`]: the alternating blame/probability solver.
//! - [`engine`]: a partitioned, superstep-synchronised execution of the same
//!   updates with deterministic message reduction.
//! - [`baselines`]: ratio, ratio with prior, greedy vertex cover and
//!   linearized belief propagation rankers.
//! - [`synth`]: synthetic corpora and ground-truth compromise injection.
//! - [`eval`]: ROC / precision-recall scoring, convergence reports and the
//!   card-reissue savings simulation.
//!
//! Data-parallel loops go through [`par`], which is backed by rayon when the
//! `parallel` feature is enabled and by plain iterators otherwise.

pub mod baselines;
pub mod detector;
pub mod engine;
pub mod eval;
pub mod graph;
pub mod par;
pub mod synth;

pub use baselines::{Method, RankedLocations};
pub use detector::{BlameMatrix, Detection, Detector, PriorParams, ThetaVector};
pub use graph::{BipartiteGraph, LocationBucket, TransactionRecord};
