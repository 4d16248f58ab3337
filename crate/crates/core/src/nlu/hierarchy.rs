use std::collections::HashMap;

use super::classifier::{build_model, classify, Classification, ClassifierModel};
use super::text::{normalize, NormalizedUtterance};
use crate::dialog::IntentRef;
use crate::error::ManifestError;
use crate::model::{compile_hierarchy, BotDefinition, HierarchyManifest, IntentKind};

/// Outcome of classifying an utterance through the bot tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub intent: IntentRef,
    pub confidence: f64,
    pub fallback: bool,
    /// Classification at each bot visited, root first.
    pub path: Vec<(String, Classification)>,
}

/// A compiled manifest plus one model per bot. Immutable once built.
#[derive(Debug, Clone)]
pub struct Router {
    manifest: HierarchyManifest,
    models: HashMap<String, ClassifierModel>,
}

impl Router {
    /// Compiles the manifest if needed and builds every bot's model.
    pub fn new(manifest: HierarchyManifest) -> Result<Self, ManifestError> {
        let manifest = if manifest.is_compiled() {
            manifest
        } else {
            compile_hierarchy(&manifest)?
        };
        let mut models = HashMap::new();
        for bot in &manifest.bots {
            let model = build_model(bot).map_err(|e| ManifestError::Validation(e.to_string()))?;
            models.insert(bot.name.clone(), model);
        }
        Ok(Router { manifest, models })
    }

    pub fn manifest(&self) -> &HierarchyManifest {
        &self.manifest
    }

    pub fn model(&self, bot: &str) -> Option<&ClassifierModel> {
        self.models.get(bot)
    }

    fn bot(&self, name: &str) -> &BotDefinition {
        self.manifest.bot(name).expect("bot names come from the manifest")
    }

    pub fn resolve(&self, text: &str) -> Resolution {
        self.resolve_normalized(&normalize(text))
    }

    /// Classifies from the root down, following delegation intents. Falls
    /// back at the first bot whose best score is under its threshold.
    pub fn resolve_normalized(&self, utterance: &NormalizedUtterance) -> Resolution {
        let mut bot = self.manifest.root_bot();
        let mut path = Vec::new();
        loop {
            let c = classify(&self.models[&bot.name], utterance);
            let top = bot.intent(&c.top_intent).expect("model intents mirror the bot");
            let confidence = c.top_confidence;
            let below = confidence < bot.confidence_threshold || top.kind == IntentKind::Fallback;
            path.push((bot.name.clone(), c));
            if below {
                let fb = bot.fallback_intent().expect("one fallback per bot");
                return Resolution {
                    intent: IntentRef::new(&bot.name, &fb.name),
                    confidence,
                    fallback: true,
                    path,
                };
            }
            match top.kind {
                IntentKind::Delegation => {
                    bot = self.bot(top.child_bot.as_deref().expect("validated"));
                }
                _ => {
                    return Resolution {
                        intent: IntentRef::new(&bot.name, &top.name),
                        confidence,
                        fallback: false,
                        path,
                    }
                }
            }
        }
    }
}
