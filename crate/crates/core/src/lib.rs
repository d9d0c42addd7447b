//! Destination-based oblivious routing: forwarding DAG construction,
//! splitting-ratio optimization, worst-case evaluation and export to
//! equal-split virtual links.

pub mod dag;
pub mod demand;
pub mod experiments;
pub mod fixtures;
pub mod oracle;
pub mod routing;
pub mod search;
pub mod splitopt;
pub mod topology;
pub mod translate;
pub mod vertices;

pub use dag::{DagSet, DestinationDag};
pub use topology::{ArcId, NodeId, Topology};
