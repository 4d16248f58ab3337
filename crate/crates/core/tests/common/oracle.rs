//! Brute-force TF-IDF nearest neighbour, written from the formulas with no
//! code shared with the library: dense vectors, its own tokenizer.

use std::collections::BTreeMap;

use legalbot::model::BotDefinition;

pub const EXACT_EPS: f64 = 1e-12;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).filter(|c| c.is_alphanumeric()).collect())
        .collect()
}

pub struct Oracle {
    vocab: Vec<String>,
    idf: Vec<f64>,
    unseen: f64,
    docs: Vec<(String, Vec<f64>)>,
    intents: Vec<String>,
}

impl Oracle {
    /// `bot` must come from a compiled manifest.
    pub fn new(bot: &BotDefinition) -> Self {
        let docs: Vec<(String, Vec<String>)> = bot
            .intents
            .iter()
            .flat_map(|i| i.utterances.iter().map(|u| (i.name.clone(), tokenize(u))))
            .collect();
        let mut vocab: Vec<String> = docs.iter().flat_map(|(_, t)| t.clone()).collect();
        vocab.sort();
        vocab.dedup();
        let n = docs.len() as f64;
        let idf = vocab
            .iter()
            .map(|w| {
                let df = docs.iter().filter(|(_, t)| t.contains(w)).count() as f64;
                ((1.0 + n) / (1.0 + df)).ln() + 1.0
            })
            .collect();
        let mut o = Oracle {
            vocab,
            idf,
            unseen: (1.0 + n).ln() + 1.0,
            docs: Vec::new(),
            intents: bot.intents.iter().map(|i| i.name.clone()).collect(),
        };
        o.docs = docs.iter().map(|(i, t)| (i.clone(), o.vector(t))).collect();
        o
    }

    fn vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        let mut extra = 0.0;
        for (k, w) in self.vocab.iter().enumerate() {
            let tf = tokens.iter().filter(|t| *t == w).count() as f64;
            v[k] = tf * self.idf[k];
        }
        let mut unknown: Vec<&String> = tokens.iter().filter(|t| !self.vocab.contains(t)).collect();
        unknown.sort();
        let mut i = 0;
        while i < unknown.len() {
            let tf = unknown.iter().filter(|t| **t == unknown[i]).count();
            extra += (tf as f64 * self.unseen).powi(2);
            i += tf;
        }
        let norm = (v.iter().map(|x| x * x).sum::<f64>() + extra).sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Intents ranked by best exemplar cosine, ties by name.
    pub fn rank(&self, text: &str) -> Vec<(String, f64)> {
        let q = self.vector(&tokenize(text));
        let mut best: BTreeMap<&str, f64> = self.intents.iter().map(|i| (i.as_str(), 0.0)).collect();
        for (intent, d) in &self.docs {
            let mut c: f64 = q.iter().zip(d).map(|(a, b)| a * b).sum();
            c = c.clamp(0.0, 1.0);
            if c > 1.0 - EXACT_EPS {
                c = 1.0;
            }
            let e = best.get_mut(intent.as_str()).unwrap();
            *e = e.max(c);
        }
        let mut r: Vec<(String, f64)> = best.into_iter().map(|(i, c)| (i.to_string(), c)).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        r
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }
}

const NOISE: &[&str] = &["zebra", "quasar", "Xylophone", "42", "blorp", "café", "ÉTÉ", "naïve"];
const PUNCT: &[&str] = &[" ", " ", " ", ", ", "? ", "! ", " - ", "'"];

/// Random utterance mixing `vocab` words (sometimes upper-cased), unknown
/// words and punctuation.
pub fn random_utterance(rng: &mut impl proptest::prelude::RngExt, vocab: &[String]) -> String {
    let len = rng.random_range(1..=10usize);
    let mut s = String::new();
    for k in 0..len {
        if k > 0 {
            s.push_str(PUNCT[rng.random_range(0..PUNCT.len())]);
        }
        let word = if rng.random_bool(0.8) {
            vocab[rng.random_range(0..vocab.len())].clone()
        } else {
            NOISE[rng.random_range(0..NOISE.len())].to_string()
        };
        if rng.random_bool(0.2) {
            s.push_str(&word.to_uppercase());
        } else {
            s.push_str(&word);
        }
    }
    if rng.random_bool(0.5) {
        s.push('?');
    }
    s
}
