//! Task-agnostic valuation of graph datasets.
//!
//! A buyer and a seller each hold a set of graphs. A broker scores how the
//! seller's data relates to the buyer's without either side revealing raw
//! adjacency or node features:
//!
//! * structural disparity `S`, from a graph Wasserstein distance between
//!   node embeddings aligned through a shared random proxy graph;
//! * diversity `D` and relevance `R`, from the buyer's feature covariance
//!   spectrum and the seller's variances along the buyer's principal axes.
//!
//! [`protocol::run_session`] drives the whole exchange and returns the report
//! plus a verifiable message log. [`valuation`] ranks several sellers.

pub mod embedding;
pub mod error;
pub mod experiments;
pub mod featural;
pub mod graph;
pub mod io;
pub mod matching;
pub mod protocol;
pub mod spectral;
pub mod transport;
pub mod valuation;

pub use error::{Error, Result};
pub use graph::{Graph, GraphSet};
