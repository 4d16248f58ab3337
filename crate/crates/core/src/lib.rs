//! Deterministic retrieval-based dialogue engine.
//!
//! Bots are declared in a JSON manifest and arranged in a delegation tree.
//! Utterances are classified with a TF-IDF nearest-neighbour model per bot,
//! answers come from a fixed response table, and fact-finding flows collect
//! contact details into lead records.

pub mod dialog;
pub mod error;
pub mod fulfillment;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod nlu;
pub mod responses;
pub mod service;

pub use dialog::{BotResponse, Engine, LeadRecord, SessionState};
pub use error::{EngineError, ManifestError};
pub use model::{compile_hierarchy, load_manifest, HierarchyManifest};
pub use responses::ResponseTable;
