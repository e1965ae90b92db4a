//! Main-memory publish/subscribe over RDF documents with full-text filters.

pub mod bench;
pub mod engine;
pub mod forest;
pub mod rdf;
pub mod reorg;
pub mod semantic;
pub mod subscription;
pub mod workload;

pub use engine::{Engine, EngineConfig, EngineError, IndexMode, Notification, SharedEngine};
pub use semantic::SubId;
