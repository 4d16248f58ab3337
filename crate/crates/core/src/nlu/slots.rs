use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::text::{normalize, NormalizedUtterance};
use crate::model::{BotDefinition, BuiltinSlot, SlotKind, SlotTypeDef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMatch {
    pub slot_name: String,
    pub value: String,
    /// Half-open token range `[start, end)`.
    pub span: (usize, usize),
}

const YES: &[&str] = &["yes", "yeah", "sure", "ok", "yep"];
const NO: &[&str] = &["no", "nope", "nah"];

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)+").unwrap())
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\+?\d[\d \-]*\d").unwrap())
}

/// Extracts a value for `slot_type` from the utterance.
///
/// `eliciting` is true while the bot is waiting on this very slot; the name
/// and number builtins only capture a bare single-token answer in that state.
/// Free-form slots are never matched here.
pub fn extract_slot(
    bot: &BotDefinition,
    slot_type: &SlotTypeDef,
    utterance: &NormalizedUtterance,
    eliciting: bool,
) -> Option<SlotMatch> {
    debug_assert!(bot.slot_type(&slot_type.name).is_some());
    let name = slot_type.name.clone();
    let (value, span) = match slot_type.kind {
        SlotKind::FreeForm => return None,
        SlotKind::Enumerated => match_enumerated(slot_type, utterance)?,
        SlotKind::Builtin => match slot_type.builtin_id? {
            BuiltinSlot::EmailAddress => {
                let m = email_re().find(&utterance.raw)?;
                let span = utterance.token_range(m.start(), m.end())?;
                (m.as_str().to_string(), span)
            }
            BuiltinSlot::PhoneNumber => match_phone(utterance)?,
            BuiltinSlot::YesNo => match_yes_no(utterance)?,
            BuiltinSlot::FirstName | BuiltinSlot::LastName => {
                if !eliciting || utterance.tokens.len() != 1 {
                    return None;
                }
                (utterance.raw_token(0).to_string(), (0, 1))
            }
            BuiltinSlot::Number => {
                if !eliciting {
                    return None;
                }
                let trimmed = utterance.raw.trim().trim_end_matches(['.', '!', '?']);
                trimmed.parse::<f64>().ok()?;
                let span = (0, utterance.tokens.len());
                (trimmed.to_string(), span)
            }
        },
    };
    Some(SlotMatch {
        slot_name: name,
        value,
        span,
    })
}

fn match_enumerated(st: &SlotTypeDef, u: &NormalizedUtterance) -> Option<(String, (usize, usize))> {
    // (length, start, canonical): longest wins, then earliest, then name.
    let mut best: Option<(usize, usize, &str)> = None;
    for v in &st.values {
        let surfaces = std::iter::once(v.canonical_value.as_str()).chain(v.synonyms.iter().map(String::as_str));
        for surface in surfaces {
            let needle = normalize(surface).tokens;
            if needle.is_empty() || needle.len() > u.tokens.len() {
                continue;
            }
            for start in 0..=(u.tokens.len() - needle.len()) {
                if u.tokens[start..start + needle.len()] == needle[..] {
                    let cand = (needle.len(), start, v.canonical_value.as_str());
                    let better = match best {
                        None => true,
                        Some((len, s, c)) => {
                            cand.0 > len || (cand.0 == len && (cand.1 < s || (cand.1 == s && cand.2 < c)))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    best.map(|(len, start, c)| (c.to_string(), (start, start + len)))
}

fn match_phone(u: &NormalizedUtterance) -> Option<(String, (usize, usize))> {
    for m in phone_re().find_iter(&u.raw) {
        let text = m.as_str();
        let plus = text.starts_with('+');
        let digits: String = text.chars().filter(char::is_ascii_digit).collect();
        if (7..=15).contains(&digits.len()) {
            let span = u.token_range(m.start(), m.end())?;
            let value = if plus { format!("+{digits}") } else { digits };
            return Some((value, span));
        }
    }
    None
}

fn match_yes_no(u: &NormalizedUtterance) -> Option<(String, (usize, usize))> {
    let yes = u.tokens.iter().position(|t| YES.contains(&t.as_str()));
    let no = u.tokens.iter().position(|t| NO.contains(&t.as_str()));
    match (yes, no) {
        (Some(i), None) => Some(("yes".into(), (i, i + 1))),
        (None, Some(i)) => Some(("no".into(), (i, i + 1))),
        _ => None,
    }
}

/// Reads a yes/no answer; `None` when neither or both appear.
pub fn yes_no(u: &NormalizedUtterance) -> Option<bool> {
    match_yes_no(u).map(|(v, _)| v == "yes")
}
