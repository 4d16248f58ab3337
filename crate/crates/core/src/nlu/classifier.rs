use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::text::{normalize, NormalizedUtterance};
use crate::error::BuildError;
use crate::model::BotDefinition;

/// Cosines this close to one are rounding noise around an exact match.
const EXACT_MATCH_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub intent: String,
    pub tokens: Vec<String>,
    /// Sparse unit-norm TF-IDF vector, sorted by vocabulary index.
    pub vector: Vec<(usize, f64)>,
}

/// Immutable nearest-neighbour index over one bot's training utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub bot_name: String,
    pub vocabulary: BTreeMap<String, usize>,
    /// Indexed like the vocabulary.
    pub idf: Vec<f64>,
    pub exemplars: Vec<Exemplar>,
    /// Number of training utterances the idf was computed over.
    pub documents: usize,
    /// Every intent of the bot, including ones without exemplars.
    pub intents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub ranking: Vec<(String, f64)>,
    pub top_intent: String,
    pub top_confidence: f64,
}

impl ClassifierModel {
    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&i| self.idf[i])
    }

    /// idf of a token no training utterance contains (df = 0).
    pub fn unseen_idf(&self) -> f64 {
        (1.0 + self.documents as f64).ln() + 1.0
    }

    /// Unit TF-IDF vector over the vocabulary. Tokens outside the vocabulary
    /// match nothing but still count towards the norm at the df = 0 idf, so
    /// unfamiliar words dilute the similarity instead of being ignored.
    fn weigh(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        let mut unseen: BTreeMap<&str, f64> = BTreeMap::new();
        for t in tokens {
            match self.vocabulary.get(t) {
                Some(&i) => *tf.entry(i).or_default() += 1.0,
                None => *unseen.entry(t).or_default() += 1.0,
            }
        }
        let mut v: Vec<(usize, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let u = self.unseen_idf();
        let unseen_sq: f64 = unseen.values().map(|c| (c * u) * (c * u)).sum();
        let norm = (v.iter().map(|(_, w)| w * w).sum::<f64>() + unseen_sq).sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }
}

/// TF-IDF model over the bot's training utterances: raw counts for term
/// frequency and smoothed `ln((1 + N) / (1 + df)) + 1` for idf.
pub fn build_model(bot: &BotDefinition) -> Result<ClassifierModel, BuildError> {
    let docs: Vec<(&str, Vec<String>)> = bot
        .intents
        .iter()
        .flat_map(|i| i.utterances.iter().map(move |u| (i.name.as_str(), normalize(u).tokens)))
        .collect();
    if docs.is_empty() {
        return Err(BuildError::NoUtterances(bot.name.clone()));
    }

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, tokens) in &docs {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }

    let n = docs.len() as f64;
    let vocabulary: BTreeMap<String, usize> =
        df.keys().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
    let idf: Vec<f64> = df
        .values()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let mut model = ClassifierModel {
        bot_name: bot.name.clone(),
        vocabulary,
        idf,
        exemplars: Vec::with_capacity(docs.len()),
        documents: docs.len(),
        intents: bot.intents.iter().map(|i| i.name.clone()).collect(),
    };
    for (intent, tokens) in docs {
        let vector = model.weigh(&tokens);
        model.exemplars.push(Exemplar {
            intent: intent.to_string(),
            tokens,
            vector,
        });
    }
    Ok(model)
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Scores each intent by its best exemplar cosine against the utterance.
pub fn classify(model: &ClassifierModel, utterance: &NormalizedUtterance) -> Classification {
    let query = model.weigh(&utterance.tokens);
    let mut best: HashMap<&str, f64> = model.intents.iter().map(|i| (i.as_str(), 0.0)).collect();
    if !query.is_empty() {
        for ex in &model.exemplars {
            let mut c = sparse_dot(&query, &ex.vector).clamp(0.0, 1.0);
            if c > 1.0 - EXACT_MATCH_EPS {
                c = 1.0;
            }
            let slot = best.entry(ex.intent.as_str()).or_insert(0.0);
            if c > *slot {
                *slot = c;
            }
        }
    }
    let mut ranking: Vec<(String, f64)> = best.into_iter().map(|(i, c)| (i.to_string(), c)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let (top_intent, top_confidence) = ranking[0].clone();
    Classification {
        ranking,
        top_intent,
        top_confidence,
    }
}

/// JSON cache of built models, keyed by a SHA-256 of the bot definition.
pub struct ModelCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CachedModel {
    bot_hash: String,
    model: ClassifierModel,
}

impl ModelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ModelCache { dir: dir.into() }
    }

    pub fn content_hash(bot: &BotDefinition) -> String {
        let bytes = serde_json::to_vec(bot).expect("bot definitions serialize");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path_for(&self, bot: &BotDefinition) -> PathBuf {
        self.dir.join(format!("{}.model.json", bot.name))
    }

    /// Returns the cached model when its hash matches, otherwise builds and stores one.
    pub fn get_or_build(&self, bot: &BotDefinition) -> Result<ClassifierModel, BuildError> {
        let hash = Self::content_hash(bot);
        let path = self.path_for(bot);
        if let Some(model) = read_cached(&path, &hash) {
            return Ok(model);
        }
        let model = build_model(bot)?;
        let entry = CachedModel {
            bot_hash: hash,
            model,
        };
        if fs::create_dir_all(&self.dir).is_ok() {
            if let Ok(json) = serde_json::to_string(&entry) {
                // A failed cache write only costs a rebuild next time.
                let _ = fs::write(&path, json);
            }
        }
        Ok(entry.model)
    }
}

fn read_cached(path: &Path, hash: &str) -> Option<ClassifierModel> {
    let text = fs::read_to_string(path).ok()?;
    let entry: CachedModel = serde_json::from_str(&text).ok()?;
    (entry.bot_hash == hash).then_some(entry.model)
}
