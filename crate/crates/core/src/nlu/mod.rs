//! Utterance normalization, the TF-IDF nearest-neighbour classifier and slot extraction.

mod classifier;
mod hierarchy;
mod slots;
mod text;

pub use classifier::{build_model, classify, Classification, ClassifierModel, Exemplar, ModelCache};
pub use hierarchy::{Resolution, Router};
pub use slots::{extract_slot, yes_no, SlotMatch};
pub use text::{bag_signature, normalize, NormalizedUtterance};
