//! Bot definitions and the delegation hierarchy.
//!
//! A manifest is a tree of bots. Parent bots reach their children through
//! delegation intents whose training utterances are pooled from the child at
//! compile time, so the parent classifier can tell which subtree an utterance
//! belongs to before the child's own classifier picks the concrete intent.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ManifestError;
use crate::nlu::{bag_signature, normalize};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Enumerated,
    Builtin,
    FreeForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinSlot {
    FirstName,
    LastName,
    PhoneNumber,
    EmailAddress,
    Number,
    YesNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValue {
    pub canonical_value: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTypeDef {
    pub name: String,
    pub kind: SlotKind,
    #[serde(default)]
    pub values: Vec<SlotValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin_id: Option<BuiltinSlot>,
}

impl SlotTypeDef {
    pub fn canonical_values(&self) -> impl Iterator<Item = &str> {
        self.values.iter().map(|v| v.canonical_value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRef {
    pub name: String,
    pub slot_type: String,
    pub prompt: String,
    #[serde(default = "default_true")]
    pub required: bool,
    pub order: u32,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentKind {
    #[default]
    Standard,
    Delegation,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fulfillment {
    #[default]
    RespondOnly,
    CollectLead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDef {
    pub name: String,
    #[serde(default)]
    pub kind: IntentKind,
    #[serde(default)]
    pub utterances: Vec<String>,
    #[serde(default)]
    pub slots: Vec<SlotRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child_bot: Option<String>,
    #[serde(default)]
    pub fulfillment: Fulfillment,
}

impl IntentDef {
    pub fn is_lead_flow(&self) -> bool {
        self.fulfillment == Fulfillment::CollectLead
    }

    /// Slots sorted by elicitation order.
    pub fn ordered_slots(&self) -> Vec<&SlotRef> {
        let mut slots: Vec<&SlotRef> = self.slots.iter().collect();
        slots.sort_by_key(|s| s.order);
        slots
    }

    pub fn slot(&self, name: &str) -> Option<&SlotRef> {
        self.slots.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotDefinition {
    pub name: String,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
    #[serde(default)]
    pub slot_types: Vec<SlotTypeDef>,
    pub intents: Vec<IntentDef>,
}

fn default_threshold() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

impl BotDefinition {
    pub fn intent(&self, name: &str) -> Option<&IntentDef> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn slot_type(&self, name: &str) -> Option<&SlotTypeDef> {
        self.slot_types.iter().find(|t| t.name == name)
    }

    pub fn fallback_intent(&self) -> Option<&IntentDef> {
        self.intents.iter().find(|i| i.kind == IntentKind::Fallback)
    }

    /// Utterances a parent pools when delegating to this bot: every
    /// non-fallback intent's utterances, lowercased, in declaration order.
    pub fn effective_utterances(&self) -> Vec<String> {
        self.intents
            .iter()
            .filter(|i| i.kind != IntentKind::Fallback)
            .flat_map(|i| i.utterances.iter().map(|u| u.to_lowercase()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: String,
    pub intent: String,
    pub child: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    root: String,
    bots: Vec<BotDefinition>,
}

/// A validated tree of bots.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyManifest {
    pub root: String,
    pub bots: Vec<BotDefinition>,
    pub edges: Vec<Edge>,
    compiled: bool,
}

impl HierarchyManifest {
    /// Validates an authored manifest (delegation intents must not carry utterances).
    pub fn new(root: impl Into<String>, bots: Vec<BotDefinition>) -> Result<Self, ManifestError> {
        let root = root.into();
        validate_authored(&root, &bots)?;
        let edges = collect_edges(&bots);
        let manifest = HierarchyManifest {
            root,
            bots,
            edges,
            compiled: false,
        };
        check_tree(&manifest)?;
        // Sibling exclusivity and pooled-utterance clashes only show up once
        // delegation intents are filled in, so validate a compiled copy.
        compile_hierarchy(&manifest)?;
        Ok(manifest)
    }

    pub fn is_compiled(&self) -> bool {
        self.compiled
    }

    pub fn bot(&self, name: &str) -> Option<&BotDefinition> {
        self.bots.iter().find(|b| b.name == name)
    }

    pub fn root_bot(&self) -> &BotDefinition {
        self.bot(&self.root).expect("root validated at construction")
    }

    pub fn children_of<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.parent == parent)
    }

    /// Finds a non-fallback intent by name, searching bots in manifest order.
    pub fn find_intent(&self, intent: &str) -> Option<(&BotDefinition, &IntentDef)> {
        self.bots.iter().find_map(|b| {
            b.intents
                .iter()
                .find(|i| i.name == intent && i.kind == IntentKind::Standard)
                .map(|i| (b, i))
        })
    }

    /// Serializes the manifest in the on-disk JSON layout.
    pub fn to_json(&self) -> String {
        let file = ManifestFile {
            root: self.root.clone(),
            bots: self.bots.clone(),
        };
        serde_json::to_string_pretty(&file).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        fs::write(path, self.to_json()).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn parse_manifest(text: &str) -> Result<HierarchyManifest, ManifestError> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    HierarchyManifest::new(file.root, file.bots)
}

pub fn load_manifest(path: &Path) -> Result<HierarchyManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text)
}

/// Fills every delegation intent with the pooled utterances of its child bot
/// and lowercases all training utterances. Children are compiled before their
/// parents so multi-level chains pool transitively. Idempotent.
pub fn compile_hierarchy(manifest: &HierarchyManifest) -> Result<HierarchyManifest, ManifestError> {
    let mut bots: BTreeMap<String, BotDefinition> = manifest
        .bots
        .iter()
        .map(|b| (b.name.clone(), b.clone()))
        .collect();

    for name in post_order(manifest) {
        let children: Vec<String> = manifest.children_of(&name).map(|e| e.child.clone()).collect();
        check_siblings_exclusive(&children, &bots)?;
        let mut bot = bots.remove(&name).expect("bot listed in tree");
        for intent in &mut bot.intents {
            match intent.kind {
                IntentKind::Delegation => {
                    let child_name = intent.child_bot.as_deref().expect("validated");
                    let child = &bots[child_name];
                    let pooled = child.effective_utterances();
                    if pooled.is_empty() {
                        return Err(ManifestError::Validation(format!(
                            "bot `{}`: delegation intent `{}` points at bot `{}` which has no standard utterances",
                            bot.name, intent.name, child_name
                        )));
                    }
                    intent.utterances = pooled;
                }
                _ => {
                    for u in &mut intent.utterances {
                        *u = u.to_lowercase();
                    }
                }
            }
        }
        check_distinct_utterances(&bot)?;
        bots.insert(name, bot);
    }

    let ordered = manifest
        .bots
        .iter()
        .map(|b| bots.remove(&b.name).expect("every bot compiled"))
        .collect();
    Ok(HierarchyManifest {
        root: manifest.root.clone(),
        bots: ordered,
        edges: manifest.edges.clone(),
        compiled: true,
    })
}

fn invalid(msg: impl Into<String>) -> ManifestError {
    ManifestError::Validation(msg.into())
}

fn validate_authored(root: &str, bots: &[BotDefinition]) -> Result<(), ManifestError> {
    let mut names = HashSet::new();
    for bot in bots {
        if !names.insert(bot.name.as_str()) {
            return Err(invalid(format!("duplicate bot name `{}`", bot.name)));
        }
    }
    if !names.contains(root) {
        return Err(invalid(format!("root bot `{root}` is not defined")));
    }
    for bot in bots {
        validate_bot(bot, &names)?;
    }
    Ok(())
}

fn validate_bot(bot: &BotDefinition, bot_names: &HashSet<&str>) -> Result<(), ManifestError> {
    let b = &bot.name;
    if !(0.0..=1.0).contains(&bot.confidence_threshold) {
        return Err(invalid(format!(
            "bot `{b}`: confidence_threshold {} outside [0, 1]",
            bot.confidence_threshold
        )));
    }

    let mut type_names = HashSet::new();
    for st in &bot.slot_types {
        if !type_names.insert(st.name.as_str()) {
            return Err(invalid(format!("bot `{b}`: duplicate slot type `{}`", st.name)));
        }
        validate_slot_type(b, st)?;
    }

    let mut intent_names = HashSet::new();
    let mut fallbacks = 0;
    for intent in &bot.intents {
        let i = &intent.name;
        if !intent_names.insert(i.as_str()) {
            return Err(invalid(format!("bot `{b}`: duplicate intent `{i}`")));
        }
        match intent.kind {
            IntentKind::Standard => {
                if intent.utterances.is_empty() {
                    return Err(invalid(format!("bot `{b}`, intent `{i}`: no utterances")));
                }
                if intent.child_bot.is_some() {
                    return Err(invalid(format!(
                        "bot `{b}`, intent `{i}`: child_bot is only allowed on delegation intents"
                    )));
                }
            }
            IntentKind::Delegation => {
                if !intent.utterances.is_empty() {
                    return Err(invalid(format!(
                        "bot `{b}`, intent `{i}`: delegation intents are populated at compile time and must not list utterances"
                    )));
                }
                match intent.child_bot.as_deref() {
                    None => {
                        return Err(invalid(format!(
                            "bot `{b}`, intent `{i}`: delegation intent without child_bot"
                        )))
                    }
                    Some(child) if !bot_names.contains(child) => {
                        return Err(invalid(format!(
                            "bot `{b}`, intent `{i}`: unknown child bot `{child}`"
                        )))
                    }
                    Some(_) => {}
                }
            }
            IntentKind::Fallback => {
                fallbacks += 1;
                if !intent.utterances.is_empty() {
                    return Err(invalid(format!(
                        "bot `{b}`, intent `{i}`: fallback intents take no utterances"
                    )));
                }
                if intent.child_bot.is_some() {
                    return Err(invalid(format!(
                        "bot `{b}`, intent `{i}`: child_bot is only allowed on delegation intents"
                    )));
                }
            }
        }
        if intent.is_lead_flow() {
            if intent.kind != IntentKind::Standard {
                return Err(invalid(format!(
                    "bot `{b}`, intent `{i}`: only standard intents can collect leads"
                )));
            }
            if intent.service.is_none() {
                return Err(invalid(format!(
                    "bot `{b}`, intent `{i}`: fact-finding intents need a service tag"
                )));
            }
        }
        let mut orders = HashSet::new();
        let mut slot_names = HashSet::new();
        for slot in &intent.slots {
            if !orders.insert(slot.order) {
                return Err(invalid(format!(
                    "bot `{b}`, intent `{i}`: slot order {} used twice",
                    slot.order
                )));
            }
            if !slot_names.insert(slot.name.as_str()) {
                return Err(invalid(format!(
                    "bot `{b}`, intent `{i}`: duplicate slot `{}`",
                    slot.name
                )));
            }
            if !type_names.contains(slot.slot_type.as_str()) {
                return Err(invalid(format!(
                    "bot `{b}`, intent `{i}`: slot `{}` has undeclared type `{}`",
                    slot.name, slot.slot_type
                )));
            }
        }
    }
    if fallbacks != 1 {
        return Err(invalid(format!(
            "bot `{b}`: expected exactly one fallback intent, found {fallbacks}"
        )));
    }
    Ok(())
}

fn validate_slot_type(bot: &str, st: &SlotTypeDef) -> Result<(), ManifestError> {
    let t = &st.name;
    match st.kind {
        SlotKind::Enumerated => {
            if st.values.is_empty() {
                return Err(invalid(format!("bot `{bot}`, slot type `{t}`: no values")));
            }
            let mut seen = HashSet::new();
            for v in &st.values {
                if v.canonical_value.trim().is_empty() {
                    return Err(invalid(format!(
                        "bot `{bot}`, slot type `{t}`: empty canonical value"
                    )));
                }
                if !seen.insert(v.canonical_value.to_lowercase()) {
                    return Err(invalid(format!(
                        "bot `{bot}`, slot type `{t}`: duplicate value `{}`",
                        v.canonical_value
                    )));
                }
            }
            if st.builtin_id.is_some() {
                return Err(invalid(format!(
                    "bot `{bot}`, slot type `{t}`: builtin_id on an enumerated type"
                )));
            }
        }
        SlotKind::Builtin => {
            if st.builtin_id.is_none() {
                return Err(invalid(format!(
                    "bot `{bot}`, slot type `{t}`: builtin type without builtin_id"
                )));
            }
            if !st.values.is_empty() {
                return Err(invalid(format!(
                    "bot `{bot}`, slot type `{t}`: builtin types take no values"
                )));
            }
        }
        SlotKind::FreeForm => {
            if !st.values.is_empty() || st.builtin_id.is_some() {
                return Err(invalid(format!(
                    "bot `{bot}`, slot type `{t}`: free_form types take no values"
                )));
            }
        }
    }
    Ok(())
}

fn collect_edges(bots: &[BotDefinition]) -> Vec<Edge> {
    bots.iter()
        .flat_map(|b| {
            b.intents
                .iter()
                .filter(|i| i.kind == IntentKind::Delegation)
                .map(move |i| Edge {
                    parent: b.name.clone(),
                    intent: i.name.clone(),
                    child: i.child_bot.clone().expect("validated"),
                })
        })
        .collect()
}

fn check_tree(m: &HierarchyManifest) -> Result<(), ManifestError> {
    let mut parent_of: HashMap<&str, &str> = HashMap::new();
    for e in &m.edges {
        if e.child == m.root {
            return Err(invalid(format!(
                "cycle: root bot `{}` is delegated to by `{}`",
                m.root, e.parent
            )));
        }
        if let Some(prev) = parent_of.insert(&e.child, &e.parent) {
            if prev == e.parent {
                return Err(invalid(format!(
                    "bot `{}` delegates to `{}` through more than one intent",
                    e.parent, e.child
                )));
            }
            return Err(invalid(format!(
                "bot `{}` has two parents (`{prev}` and `{}`)",
                e.child, e.parent
            )));
        }
    }
    // Every bot must reach the root by walking parents; anything else is
    // either a cycle or a disconnected bot.
    for bot in &m.bots {
        let mut cur = bot.name.as_str();
        let mut steps = 0;
        while cur != m.root {
            match parent_of.get(cur) {
                Some(p) => cur = p,
                None => {
                    return Err(invalid(format!(
                        "bot `{}` is not reachable from root `{}`",
                        bot.name, m.root
                    )))
                }
            }
            steps += 1;
            if steps > m.bots.len() {
                return Err(invalid(format!("cycle through bot `{}`", bot.name)));
            }
        }
    }
    Ok(())
}

fn post_order(m: &HierarchyManifest) -> Vec<String> {
    fn visit(m: &HierarchyManifest, name: &str, out: &mut Vec<String>) {
        for e in m.children_of(name) {
            visit(m, &e.child, out);
        }
        out.push(name.to_string());
    }
    let mut out = Vec::with_capacity(m.bots.len());
    visit(m, &m.root, &mut out);
    out
}

/// Two utterances collide when their bags of tokens are proportional, since
/// they would then be indistinguishable to a cosine classifier.
fn check_distinct_utterances(bot: &BotDefinition) -> Result<(), ManifestError> {
    let mut owner: HashMap<Vec<(String, usize)>, (&str, &str)> = HashMap::new();
    for intent in &bot.intents {
        for u in &intent.utterances {
            let sig = bag_signature(&normalize(u).tokens);
            if sig.is_empty() {
                return Err(invalid(format!(
                    "bot `{}`, intent `{}`: utterance `{u}` has no tokens",
                    bot.name, intent.name
                )));
            }
            if let Some((other, text)) = owner.get(&sig) {
                if *other != intent.name {
                    return Err(invalid(format!(
                        "bot `{}`: utterance `{u}` of intent `{}` duplicates `{text}` of intent `{other}`",
                        bot.name, intent.name
                    )));
                }
            } else {
                owner.insert(sig, (&intent.name, u));
            }
        }
    }
    Ok(())
}

fn check_siblings_exclusive(
    siblings: &[String],
    bots: &BTreeMap<String, BotDefinition>,
) -> Result<(), ManifestError> {
    let mut owner: HashMap<Vec<(String, usize)>, &str> = HashMap::new();
    for name in siblings {
        let mut own = HashSet::new();
        for u in bots[name].effective_utterances() {
            let sig = bag_signature(&normalize(&u).tokens);
            if !own.insert(sig.clone()) {
                continue;
            }
            if let Some(other) = owner.insert(sig, name) {
                return Err(invalid(format!(
                    "overlapping utterances: `{u}` appears in sibling bots `{other}` and `{name}`"
                )));
            }
        }
    }
    Ok(())
}
