//! The conversation engine and its per-session state.

mod engine;
mod split;

use std::collections::BTreeMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::SlotRef;

pub use crate::nlu::Resolution;
pub use engine::{Engine, TurnOutput};
pub use split::{sentences, split_response, MAX_SENTENCES};

/// Placeholder stored in a free-form slot while the bot waits for the user's
/// own words. A user answer equal to it is rejected.
pub const FREE_FORM_SENTINEL: &str = "to_be_filled";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntentRef {
    pub bot: String,
    pub intent: String,
}

impl IntentRef {
    pub fn new(bot: impl Into<String>, intent: impl Into<String>) -> Self {
        IntentRef {
            bot: bot.into(),
            intent: intent.into(),
        }
    }
}

impl std::fmt::Display for IntentRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.bot, self.intent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingSlot {
    pub intent: IntentRef,
    pub slot: SlotRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfirmKind {
    Restart,
    Resume,
}

/// Frozen copy of an interrupted elicitation. Holds no snapshot of its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationSnapshot {
    pub filled_slots: BTreeMap<String, String>,
    pub pending_slot: Option<PendingSlot>,
    pub active_intent: Option<IntentRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub filled_slots: BTreeMap<String, String>,
    pub pending_slot: Option<PendingSlot>,
    pub active_intent: Option<IntentRef>,
    pub last_input_type: Option<String>,
    pub last_service: Option<String>,
    pub pending_confirmation: Option<ConfirmKind>,
    pub snapshot: Option<ElicitationSnapshot>,
    pub transcript: Vec<TranscriptEntry>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            filled_slots: BTreeMap::new(),
            pending_slot: None,
            active_intent: None,
            last_input_type: None,
            last_service: None,
            pending_confirmation: None,
            snapshot: None,
            transcript: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending_slot.is_none() && self.pending_confirmation.is_none()
    }

    pub(crate) fn take_elicitation(&mut self) -> Option<ElicitationSnapshot> {
        self.active_intent.as_ref()?;
        Some(ElicitationSnapshot {
            filled_slots: std::mem::take(&mut self.filled_slots),
            pending_slot: self.pending_slot.take(),
            active_intent: self.active_intent.take(),
        })
    }

    pub(crate) fn restore(&mut self, snap: ElicitationSnapshot) {
        self.filled_slots = snap.filled_slots;
        self.pending_slot = snap.pending_slot;
        self.active_intent = snap.active_intent;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Button {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotResponse {
    pub messages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buttons: Option<Vec<Button>>,
    pub end_of_flow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadRecord {
    pub session_id: String,
    pub service: String,
    pub answers: Vec<Answer>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub slot: String,
    pub value: String,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Ticks one second per reading from a fixed start; for reproducible runs.
#[derive(Debug)]
pub struct SteppingClock {
    next: Mutex<DateTime<Utc>>,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        SteppingClock {
            next: Mutex::new(start),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let mut next = self.next.lock().expect("clock poisoned");
        let now = *next;
        *next = now + chrono::Duration::seconds(1);
        now
    }
}
