//! Physician referral analysis: referral and professional networks built from
//! consultation records, centrality features, three node-embedding learners,
//! link prediction with and without professional-network features, and exact
//! Shapley attribution of a pair classifier.
//!
//! Everything is deterministic given a root seed; see [`numkit::rng`].

pub mod centrality;
pub mod embed;
pub mod error;
pub mod explain;
pub mod graph;
pub mod ingest;
pub mod linkpred;
pub mod netbuild;
pub mod numkit;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Network, NodeId, Role};
