use std::collections::BTreeMap;

/// Lowercased word tokens of an utterance, with byte spans into the raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedUtterance {
    pub raw: String,
    pub tokens: Vec<String>,
    pub spans: Vec<(usize, usize)>,
}

impl NormalizedUtterance {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Original-case text of token `i`.
    pub fn raw_token(&self, i: usize) -> &str {
        let (s, e) = self.spans[i];
        &self.raw[s..e]
    }

    /// Indices of the tokens overlapping the byte range `[start, end)`.
    pub fn token_range(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let first = self.spans.iter().position(|&(s, e)| e > start && s < end)?;
        let last = self.spans.iter().rposition(|&(s, e)| e > start && s < end)?;
        Some((first, last + 1))
    }
}

/// Splits on anything that is not a letter or digit and lowercases.
/// Symbols such as `£` and `+` never survive into tokens.
pub fn normalize(text: &str) -> NormalizedUtterance {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut current = String::new();
    let mut start = 0;

    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = idx;
            }
            // Some lowercase expansions carry combining marks; keep only the
            // alphanumeric part so a second pass sees the same token.
            current.extend(ch.to_lowercase().filter(|c| c.is_alphanumeric()));
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
            spans.push((start, idx));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
        spans.push((start, text.len()));
    }

    NormalizedUtterance {
        raw: text.to_string(),
        tokens,
        spans,
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Token counts divided by their gcd, sorted by token. Two utterances share a
/// signature exactly when their term-frequency vectors point the same way.
pub fn bag_signature(tokens: &[String]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let g = counts.values().copied().fold(0, gcd);
    counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c / g.max(1)))
        .collect()
}
