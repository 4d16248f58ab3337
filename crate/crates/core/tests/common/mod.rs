#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use legalbot::dialog::SteppingClock;
use legalbot::fulfillment::{Fulfillment, MemorySink};
use legalbot::nlu::Router;
use legalbot::{load_manifest, Engine, HierarchyManifest, ResponseTable};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixture").join(rel)
}

pub fn manifest() -> HierarchyManifest {
    load_manifest(&fixture("legal_firm.json")).expect("fixture manifest loads")
}

pub fn responses() -> ResponseTable {
    ResponseTable::load(&fixture("responses.csv")).expect("fixture responses load")
}

pub fn router() -> Router {
    Router::new(manifest()).expect("fixture compiles")
}

pub fn clock() -> Arc<SteppingClock> {
    Arc::new(SteppingClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap()))
}

/// Fixture engine with a fixed clock and in-memory sinks.
pub fn engine() -> (Arc<Engine>, MemorySink) {
    let (sinks, mem) = Fulfillment::in_memory();
    let engine = Engine::new(manifest(), responses())
        .expect("fixture engine")
        .with_clock(clock())
        .with_sinks(Arc::new(sinks));
    (Arc::new(engine), mem)
}
