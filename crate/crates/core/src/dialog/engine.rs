use std::sync::Arc;

use tracing::warn;
use uuid::Uuid;

use super::split::split_response;
use super::{
    Answer, BotResponse, Button, Clock, ConfirmKind, IntentRef, LeadRecord, PendingSlot, Role, SessionState,
    SystemClock, TranscriptEntry, FREE_FORM_SENTINEL,
};
use crate::error::EngineError;
use crate::fulfillment::Fulfillment;
use crate::model::{
    BotDefinition, BuiltinSlot, HierarchyManifest, IntentDef, IntentKind, SlotKind, SlotRef, SlotTypeDef,
};
use crate::nlu::{extract_slot, normalize, yes_no, ClassifierModel, NormalizedUtterance, Resolution, Router};
use crate::responses::ResponseTable;

const RESTART_INTENT: &str = "restart";
const RESUME_INTENT: &str = "resume";
const FF_COMPLETE: &str = "ff_complete";
const FF_DECLINED: &str = "ff_declined";

// System prompts. Each can be overridden by a response-table row of the same name.
const SYS_RESTART_CONFIRM: (&str, &str) = ("sys.restart_confirm", "Are you sure you want to restart?");
const SYS_RESUME_CONFIRM: (&str, &str) = ("sys.resume_confirm", "Are you sure you want to resume?");
const SYS_RESTART_DONE: (&str, &str) = ("sys.restart_done", "Okay, let's start again. How can I help you?");
const SYS_NOTHING_TO_RESUME: (&str, &str) = ("sys.nothing_to_resume", "There is nothing to resume.");
const SYS_CARRY_ON: (&str, &str) = ("sys.carry_on", "No problem, let's carry on.");
const SYS_RESUME_HINT: (&str, &str) = (
    "sys.resume_hint",
    "Say \"resume\" whenever you want to pick up where we left off.",
);
const SYS_WHICH_SERVICE: (&str, &str) = ("sys.which_service", "Which service would you like to know about?");
const DEFAULT_FF_COMPLETE: &str = "Thanks for that. One of our legal experts will contact you as soon as possible.";
const DEFAULT_FF_DECLINED: &str = "No problem. Is there anything else I can help you with?";

/// What one turn produced, beyond the updated session.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutput {
    pub response: BotResponse,
    /// The intent that handled the turn.
    pub intent: Option<IntentRef>,
    pub confidence: Option<f64>,
    pub lead: Option<LeadRecord>,
}

/// Shared, immutable conversation engine. Sessions are passed in by the caller.
pub struct Engine {
    router: Router,
    responses: ResponseTable,
    clock: Arc<dyn Clock>,
    sinks: Option<Arc<Fulfillment>>,
}

struct Reply {
    texts: Vec<String>,
    buttons: Option<Vec<Button>>,
    intent: Option<IntentRef>,
    confidence: Option<f64>,
    lead: Option<LeadRecord>,
}

impl Reply {
    fn new(intent: Option<IntentRef>) -> Self {
        Reply {
            texts: Vec::new(),
            buttons: None,
            intent,
            confidence: None,
            lead: None,
        }
    }

    fn say(mut self, text: impl Into<String>) -> Self {
        self.texts.push(text.into());
        self
    }
}

impl Engine {
    /// Compiles the manifest if needed, builds a model per bot and checks the
    /// response table covers every reachable answer.
    pub fn new(manifest: HierarchyManifest, responses: ResponseTable) -> Result<Self, EngineError> {
        let router = Router::new(manifest).map_err(|e| EngineError::Config(e.to_string()))?;
        responses.validate_against(router.manifest())?;
        Ok(Engine {
            router,
            responses,
            clock: Arc::new(SystemClock),
            sinks: None,
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sinks(mut self, sinks: Arc<Fulfillment>) -> Self {
        self.sinks = Some(sinks);
        self
    }

    pub fn manifest(&self) -> &HierarchyManifest {
        self.router.manifest()
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn responses(&self) -> &ResponseTable {
        &self.responses
    }

    pub fn model(&self, bot: &str) -> Option<&ClassifierModel> {
        self.router.model(bot)
    }

    pub fn sinks(&self) -> Option<&Arc<Fulfillment>> {
        self.sinks.as_ref()
    }

    pub fn start_session(&self) -> SessionState {
        SessionState::new(Uuid::new_v4().to_string())
    }

    fn bot(&self, name: &str) -> &BotDefinition {
        self.manifest().bot(name).expect("bot names come from the manifest")
    }

    fn intent_def(&self, r: &IntentRef) -> Result<&IntentDef, EngineError> {
        self.manifest()
            .bot(&r.bot)
            .and_then(|b| b.intent(&r.intent))
            .ok_or_else(|| EngineError::Internal(format!("unknown intent {r}")))
    }

    pub fn resolve(&self, text: &str) -> Resolution {
        self.router.resolve(text)
    }

    pub fn resolve_normalized(&self, utterance: &NormalizedUtterance) -> Resolution {
        self.router.resolve_normalized(utterance)
    }

    /// Processes one user message, updating the session in place.
    pub fn handle_turn(&self, state: &mut SessionState, user_text: &str) -> Result<TurnOutput, EngineError> {
        state.transcript.push(TranscriptEntry {
            role: Role::User,
            text: user_text.to_string(),
            timestamp: self.clock.now(),
            message_count: None,
        });
        if let Some(sinks) = &self.sinks {
            let entry = state.transcript.last().expect("just pushed");
            if let Err(e) = sinks.log_turn(&state.session_id, Role::User, user_text, entry.timestamp, None) {
                warn!(session = %state.session_id, "transcript write failed: {e}");
            }
        }

        let mut reply = self.dispatch(state, user_text)?;
        let lead = reply.lead.take();
        let (intent, confidence) = (reply.intent.clone(), reply.confidence);
        let response = to_response(state, reply);

        let ts = self.clock.now();
        let joined = response.messages.join(" ");
        let count = response.messages.len();
        if let Some(sinks) = &self.sinks {
            if let Err(e) = sinks.log_turn(&state.session_id, Role::Bot, &joined, ts, Some(count)) {
                warn!(session = %state.session_id, "transcript write failed: {e}");
            }
            if let Some(lead) = &lead {
                if let Err(e) = sinks.submit_lead(lead) {
                    warn!(session = %state.session_id, "lead delivery failed, queued for retry: {e}");
                }
            }
        }
        state.transcript.push(TranscriptEntry {
            role: Role::Bot,
            text: joined,
            timestamp: ts,
            message_count: Some(count),
        });

        Ok(TurnOutput {
            response,
            intent,
            confidence,
            lead,
        })
    }

    fn dispatch(&self, state: &mut SessionState, text: &str) -> Result<Reply, EngineError> {
        let utterance = normalize(text);

        if let Some(kind) = state.pending_confirmation.take() {
            return self.answer_confirmation(state, kind, &utterance);
        }

        if state.last_input_type.is_some() && is_followup(&utterance) {
            return self.followup(state, &utterance);
        }

        if let Some(pending) = state.pending_slot.clone() {
            if let Some(value) = self.try_fill(state, &pending, text, &utterance) {
                return self.accept_slot(state, &pending, value);
            }
            let r = self.resolve_normalized(&utterance);
            let active = state.active_intent.clone();
            if !r.fallback && active.as_ref() != Some(&r.intent) {
                if self.is_session_control(&r.intent) {
                    return self.run_resolved(state, r, &utterance);
                }
                self.suspend_elicitation(state);
                let mut reply = self.run_resolved(state, r, &utterance)?;
                if state.snapshot.is_some() && state.pending_slot.is_none() {
                    reply = reply.say(self.sys(SYS_RESUME_HINT));
                }
                return Ok(reply);
            }
            let mut reply = Reply::new(active);
            reply.confidence = Some(r.confidence);
            return Ok(self.prompt_for(state, reply, &pending));
        }

        let r = self.resolve_normalized(&utterance);
        self.run_resolved(state, r, &utterance)
    }

    /// Moves a live lead flow into the snapshot; other elicitations are dropped.
    fn suspend_elicitation(&self, state: &mut SessionState) {
        let is_lead = state
            .active_intent
            .as_ref()
            .and_then(|a| self.intent_def(a).ok())
            .is_some_and(|d| d.is_lead_flow());
        match state.take_elicitation() {
            Some(snap) if is_lead => state.snapshot = Some(snap),
            _ => {}
        }
    }

    fn is_session_control(&self, r: &IntentRef) -> bool {
        r.bot == self.manifest().root && (r.intent == RESTART_INTENT || r.intent == RESUME_INTENT)
    }

    fn sys(&self, (key, default): (&str, &str)) -> String {
        self.responses.get(key, None).unwrap_or(default).to_string()
    }

    fn run_resolved(&self, state: &mut SessionState, r: Resolution, utterance: &NormalizedUtterance) -> Result<Reply, EngineError> {
        let confidence = r.confidence;
        let mut reply = if r.fallback {
            let text = self.responses.lookup(&r.intent.intent, None)?;
            Reply::new(Some(r.intent)).say(text)
        } else if self.is_session_control(&r.intent) {
            let kind = if r.intent.intent == RESTART_INTENT {
                ConfirmKind::Restart
            } else {
                ConfirmKind::Resume
            };
            self.confirm(state, kind, r.intent)
        } else {
            let def = self.intent_def(&r.intent)?;
            if def.is_lead_flow() {
                self.begin_lead_flow(state, r.intent, utterance)?
            } else {
                self.answer_faq(state, r.intent, utterance)?
            }
        };
        reply.confidence = Some(confidence);
        Ok(reply)
    }

    /// Asks to confirm a restart or resume. Resuming with nothing saved is
    /// answered straight away.
    pub fn restart_or_resume(&self, state: &mut SessionState, kind: ConfirmKind) -> BotResponse {
        let name = match kind {
            ConfirmKind::Restart => RESTART_INTENT,
            ConfirmKind::Resume => RESUME_INTENT,
        };
        let reply = self.confirm(state, kind, IntentRef::new(&self.manifest().root, name));
        to_response(state, reply)
    }

    /// Public form of the follow-up handler; the caller must have checked
    /// that the session has a last input type.
    pub fn resolve_followup(&self, state: &mut SessionState, user_text: &str) -> Result<BotResponse, EngineError> {
        if state.last_input_type.is_none() {
            return Err(EngineError::Internal("follow-up without a previous input type".into()));
        }
        let reply = self.followup(state, &normalize(user_text))?;
        Ok(to_response(state, reply))
    }

    fn confirm(&self, state: &mut SessionState, kind: ConfirmKind, intent: IntentRef) -> Reply {
        let reply = Reply::new(Some(intent));
        match kind {
            ConfirmKind::Resume if state.snapshot.is_none() => reply.say(self.sys(SYS_NOTHING_TO_RESUME)),
            ConfirmKind::Resume => {
                state.pending_confirmation = Some(kind);
                yes_no_buttons(reply.say(self.sys(SYS_RESUME_CONFIRM)))
            }
            ConfirmKind::Restart => {
                state.pending_confirmation = Some(kind);
                yes_no_buttons(reply.say(self.sys(SYS_RESTART_CONFIRM)))
            }
        }
    }

    fn answer_confirmation(
        &self,
        state: &mut SessionState,
        kind: ConfirmKind,
        utterance: &NormalizedUtterance,
    ) -> Result<Reply, EngineError> {
        let intent_name = match kind {
            ConfirmKind::Restart => RESTART_INTENT,
            ConfirmKind::Resume => RESUME_INTENT,
        };
        let reply = Reply::new(Some(IntentRef::new(&self.manifest().root, intent_name)));
        match (yes_no(utterance), kind) {
            (Some(true), ConfirmKind::Restart) => {
                // The interrupted flow stays available to a later resume.
                if let Some(snap) = state.take_elicitation() {
                    state.snapshot = Some(snap);
                }
                state.filled_slots.clear();
                state.last_input_type = None;
                state.last_service = None;
                Ok(reply.say(self.sys(SYS_RESTART_DONE)))
            }
            (Some(true), ConfirmKind::Resume) => {
                let snap = state
                    .snapshot
                    .take()
                    .ok_or_else(|| EngineError::Internal("resume confirmed without a snapshot".into()))?;
                state.restore(snap);
                match state.pending_slot.clone() {
                    Some(p) => Ok(self.prompt_for(state, reply, &p)),
                    None => Ok(reply),
                }
            }
            (Some(false), _) => {
                let reply = reply.say(self.sys(SYS_CARRY_ON));
                match state.pending_slot.clone() {
                    Some(p) => Ok(self.prompt_for(state, reply, &p)),
                    None => Ok(reply),
                }
            }
            (None, _) => Ok(self.confirm(state, kind, reply.intent.clone().expect("set above"))),
        }
    }

    /// Answers a "how about X" / "what about X" follow-up by reusing the last
    /// input type with the newly mentioned service.
    fn followup(&self, state: &mut SessionState, utterance: &NormalizedUtterance) -> Result<Reply, EngineError> {
        let input_type = state.last_input_type.clone().expect("checked by caller");
        let Some((bot, intent)) = self.intent_for_input_type(&input_type) else {
            return Err(EngineError::Internal(format!("no intent has input type `{input_type}`")));
        };
        let iref = IntentRef::new(&bot.name, &intent.name);
        let rest_start = utterance.spans.get(2).map(|s| s.0).unwrap_or(utterance.raw.len());
        let remainder = normalize(&utterance.raw[rest_start..]);

        let Some(slot) = service_slot(bot, intent) else {
            let text = self.responses.lookup(&intent.name, None)?;
            return Ok(Reply::new(Some(iref)).say(text));
        };
        let st = bot.slot_type(&slot.slot_type).expect("validated");
        match extract_slot(bot, st, &remainder, false) {
            Some(m) => {
                let text = self.responses.lookup(&intent.name, Some(&m.value))?;
                state.last_service = Some(m.value);
                let mut reply = Reply::new(Some(iref)).say(text);
                if let Some(p) = state.pending_slot.clone() {
                    reply = self.prompt_for(state, reply, &p);
                }
                Ok(reply)
            }
            None => {
                self.suspend_elicitation(state);
                state.filled_slots.clear();
                state.active_intent = Some(iref.clone());
                let pending = PendingSlot {
                    intent: iref.clone(),
                    slot: slot.clone(),
                };
                state.pending_slot = Some(pending);
                let reply = Reply::new(Some(iref)).say(self.sys(SYS_WHICH_SERVICE));
                Ok(self.with_choice_buttons(reply, bot, slot))
            }
        }
    }

    fn intent_for_input_type(&self, input_type: &str) -> Option<(&BotDefinition, &IntentDef)> {
        self.manifest().bots.iter().find_map(|b| {
            b.intents
                .iter()
                .find(|i| i.kind == IntentKind::Standard && i.input_type.as_deref() == Some(input_type))
                .map(|i| (b, i))
        })
    }

    fn answer_faq(&self, state: &mut SessionState, iref: IntentRef, utterance: &NormalizedUtterance) -> Result<Reply, EngineError> {
        let bot = self.bot(&iref.bot);
        let intent = bot.intent(&iref.intent).expect("resolved intent exists");
        let mut service = None;
        if let Some(slot) = service_slot(bot, intent) {
            let st = bot.slot_type(&slot.slot_type).expect("validated");
            service = extract_slot(bot, st, utterance, false).map(|m| m.value).or_else(|| {
                state
                    .last_service
                    .clone()
                    .filter(|s| st.canonical_values().any(|v| v == s))
            });
            if service.is_none() && slot.required {
                state.filled_slots.clear();
                state.active_intent = Some(iref.clone());
                let pending = PendingSlot {
                    intent: iref.clone(),
                    slot: slot.clone(),
                };
                state.pending_slot = Some(pending.clone());
                return Ok(self.prompt_for(state, Reply::new(Some(iref)), &pending));
            }
        }
        self.deliver_faq(state, iref, service)
    }

    fn deliver_faq(&self, state: &mut SessionState, iref: IntentRef, service: Option<String>) -> Result<Reply, EngineError> {
        let intent = self.intent_def(&iref)?;
        let text = self.responses.lookup(&intent.name, service.as_deref())?.to_string();
        if let Some(it) = &intent.input_type {
            state.last_input_type = Some(it.clone());
            if service.is_some() {
                state.last_service = service;
            }
        }
        if state.active_intent.as_ref() == Some(&iref) {
            state.active_intent = None;
            state.pending_slot = None;
        }
        Ok(Reply::new(Some(iref)).say(text))
    }

    fn begin_lead_flow(&self, state: &mut SessionState, iref: IntentRef, utterance: &NormalizedUtterance) -> Result<Reply, EngineError> {
        let bot = self.bot(&iref.bot);
        let intent = bot.intent(&iref.intent).expect("resolved intent exists");
        state.filled_slots.clear();
        state.pending_slot = None;
        state.active_intent = Some(iref.clone());

        // Enumerated details mentioned up front don't need asking again.
        for slot in intent.ordered_slots() {
            let st = bot.slot_type(&slot.slot_type).expect("validated");
            if st.kind == SlotKind::Enumerated {
                if let Some(m) = extract_slot(bot, st, utterance, false) {
                    state.filled_slots.insert(slot.name.clone(), m.value);
                }
            }
        }

        let mut reply = Reply::new(Some(iref));
        let intro = self.responses.get(&intent.name, intent.service.as_deref());
        if let Some(intro) = intro {
            reply = reply.say(intro);
        }
        self.advance(state, reply, bot, intent, intro)
    }

    /// Prompts for the next missing required slot, or completes the flow.
    fn advance(
        &self,
        state: &mut SessionState,
        reply: Reply,
        bot: &BotDefinition,
        intent: &IntentDef,
        preamble: Option<&str>,
    ) -> Result<Reply, EngineError> {
        let iref = IntentRef::new(&bot.name, &intent.name);
        let next = intent
            .ordered_slots()
            .into_iter()
            .find(|s| s.required && !state.filled_slots.contains_key(&s.name));
        match next {
            Some(slot) => {
                let pending = PendingSlot {
                    intent: iref,
                    slot: slot.clone(),
                };
                state.pending_slot = Some(pending.clone());
                // An intro may already end with the opening question.
                if preamble.is_some_and(|p| p.trim_end().ends_with(slot.prompt.trim())) {
                    self.mark_free_form(state, bot, slot);
                    let st = bot.slot_type(&slot.slot_type).expect("validated");
                    return Ok(self.with_slot_buttons(reply, bot, st, slot));
                }
                Ok(self.prompt_for(state, reply, &pending))
            }
            None => self.complete_lead_flow(state, reply, intent),
        }
    }

    fn complete_lead_flow(&self, state: &mut SessionState, mut reply: Reply, intent: &IntentDef) -> Result<Reply, EngineError> {
        let service = intent.service.clone().expect("lead flows carry a service");
        let answers = intent
            .ordered_slots()
            .into_iter()
            .filter_map(|s| {
                state.filled_slots.get(&s.name).map(|v| Answer {
                    slot: s.name.clone(),
                    value: v.clone(),
                })
            })
            .collect();
        reply.lead = Some(LeadRecord {
            session_id: state.session_id.clone(),
            service: service.clone(),
            answers,
            created_at: self.clock.now(),
        });
        state.pending_slot = None;
        state.active_intent = None;
        let text = self
            .responses
            .get(FF_COMPLETE, Some(&service))
            .unwrap_or(DEFAULT_FF_COMPLETE)
            .to_string();
        Ok(reply.say(text))
    }

    fn mark_free_form(&self, state: &mut SessionState, bot: &BotDefinition, slot: &SlotRef) {
        let st = bot.slot_type(&slot.slot_type).expect("validated");
        if st.kind == SlotKind::FreeForm {
            state
                .filled_slots
                .insert(slot.name.clone(), FREE_FORM_SENTINEL.to_string());
        }
    }

    fn prompt_for(&self, state: &mut SessionState, reply: Reply, pending: &PendingSlot) -> Reply {
        let bot = self.bot(&pending.intent.bot);
        self.mark_free_form(state, bot, &pending.slot);
        let st = bot.slot_type(&pending.slot.slot_type).expect("validated");
        let reply = reply.say(pending.slot.prompt.clone());
        self.with_slot_buttons(reply, bot, st, &pending.slot)
    }

    fn with_slot_buttons(&self, reply: Reply, bot: &BotDefinition, st: &SlotTypeDef, slot: &SlotRef) -> Reply {
        match st.kind {
            SlotKind::Enumerated => self.with_choice_buttons(reply, bot, slot),
            SlotKind::Builtin if st.builtin_id == Some(BuiltinSlot::YesNo) => yes_no_buttons(reply),
            _ => reply,
        }
    }

    fn with_choice_buttons(&self, mut reply: Reply, bot: &BotDefinition, slot: &SlotRef) -> Reply {
        let st = bot.slot_type(&slot.slot_type).expect("validated");
        reply.buttons = Some(
            st.values
                .iter()
                .map(|v| Button {
                    label: v.synonyms.first().cloned().unwrap_or_else(|| v.canonical_value.clone()),
                    value: v.canonical_value.clone(),
                })
                .collect(),
        );
        reply
    }

    fn try_fill(&self, state: &SessionState, pending: &PendingSlot, raw: &str, utterance: &NormalizedUtterance) -> Option<String> {
        let bot = self.bot(&pending.intent.bot);
        let st = bot.slot_type(&pending.slot.slot_type)?;
        if st.kind == SlotKind::FreeForm {
            let answer = raw.trim();
            let waiting = state.filled_slots.get(&pending.slot.name).map(String::as_str) == Some(FREE_FORM_SENTINEL);
            if !waiting || answer.is_empty() || answer == FREE_FORM_SENTINEL {
                return None;
            }
            return Some(answer.to_string());
        }
        extract_slot(bot, st, utterance, true).map(|m| m.value)
    }

    fn accept_slot(&self, state: &mut SessionState, pending: &PendingSlot, value: String) -> Result<Reply, EngineError> {
        let bot = self.bot(&pending.intent.bot);
        let intent = bot.intent(&pending.intent.intent).expect("pending intent exists");
        state.pending_slot = None;
        state.filled_slots.insert(pending.slot.name.clone(), value.clone());

        if !intent.is_lead_flow() {
            // Only FAQ service questions elicit outside lead flows.
            return self.deliver_faq(state, pending.intent.clone(), Some(value));
        }

        let st = bot.slot_type(&pending.slot.slot_type).expect("validated");
        let is_consent = intent.ordered_slots().first().map(|s| s.name.as_str()) == Some(pending.slot.name.as_str())
            && st.builtin_id == Some(BuiltinSlot::YesNo);
        if is_consent && value == "no" {
            state.active_intent = None;
            let text = self
                .responses
                .get(FF_DECLINED, intent.service.as_deref())
                .unwrap_or(DEFAULT_FF_DECLINED)
                .to_string();
            return Ok(Reply::new(Some(pending.intent.clone())).say(text));
        }
        self.advance(state, Reply::new(Some(pending.intent.clone())), bot, intent, None)
    }
}

fn to_response(state: &SessionState, reply: Reply) -> BotResponse {
    BotResponse {
        messages: reply.texts.iter().flat_map(|t| split_response(t)).collect(),
        buttons: reply.buttons,
        end_of_flow: state.is_idle(),
    }
}

fn yes_no_buttons(mut reply: Reply) -> Reply {
    reply.buttons = Some(vec![
        Button {
            label: "Yes".into(),
            value: "yes".into(),
        },
        Button {
            label: "No".into(),
            value: "no".into(),
        },
    ]);
    reply
}

/// The service an FAQ or follow-up is about: the intent's first enumerated slot.
fn service_slot<'a>(bot: &BotDefinition, intent: &'a IntentDef) -> Option<&'a SlotRef> {
    intent
        .ordered_slots()
        .into_iter()
        .find(|s| bot.slot_type(&s.slot_type).is_some_and(|t| t.kind == SlotKind::Enumerated))
}

fn is_followup(u: &NormalizedUtterance) -> bool {
    matches!(u.tokens.as_slice(), [first, second, ..] if (first == "how" || first == "what") && second == "about")
}
