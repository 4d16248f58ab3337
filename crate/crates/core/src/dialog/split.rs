/// Most sentences one chat bubble may carry.
pub const MAX_SENTENCES: usize = 3;

/// Splits text into sentences. A boundary is a run of `.`, `!` or `?`
/// followed by whitespace or the end of the text, except a lone `.` right
/// after a single letter (initials, "i.e.").
pub fn sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && matches!(chars[i].1, '.' | '!' | '?') {
            i += 1;
        }
        let at_end = i == chars.len();
        if !at_end && !chars[i].1.is_whitespace() {
            continue;
        }
        let lone_dot = i - run_start == 1 && c == '.';
        if lone_dot && follows_single_letter(&chars, run_start) {
            continue;
        }
        let end = if at_end { text.len() } else { chars[i].0 };
        let sentence = text[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence);
        }
        start = end;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

fn follows_single_letter(chars: &[(usize, char)], dot: usize) -> bool {
    if dot == 0 || !chars[dot - 1].1.is_alphabetic() {
        return false;
    }
    dot < 2 || !chars[dot - 2].1.is_alphabetic()
}

/// Groups sentences greedily into chunks of at most three.
pub fn split_response(text: &str) -> Vec<String> {
    sentences(text)
        .chunks(MAX_SENTENCES)
        .map(|c| c.join(" "))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_text_unchanged() {
        assert_eq!(split_response("Hello."), ["Hello."]);
        assert!(split_response("").is_empty());
        assert!(split_response("   ").is_empty());
    }

    #[test]
    fn seven_sentences_group_three_three_one() {
        let text = "One. Two! Three? Four. Five. Six. Seven.";
        let chunks = split_response(text);
        assert_eq!(chunks, ["One. Two! Three?", "Four. Five. Six.", "Seven."]);
    }

    #[test]
    fn initials_and_abbreviations_do_not_split() {
        assert_eq!(sentences("Ask J. Smith about it. Then call."), ["Ask J. Smith about it.", "Then call."]);
        assert_eq!(
            sentences("Is your matter urgent (i.e. needs to be finalised within the next 48 hours)?"),
            ["Is your matter urgent (i.e. needs to be finalised within the next 48 hours)?"]
        );
    }

    #[test]
    fn dots_inside_tokens_do_not_split() {
        assert_eq!(
            sentences("Email chatbot@xyz.co.uk. We reply fast."),
            ["Email chatbot@xyz.co.uk.", "We reply fast."]
        );
        assert_eq!(sentences("Costs £1.50 each."), ["Costs £1.50 each."]);
    }

    #[test]
    fn punctuation_runs_and_trailing_text() {
        assert_eq!(sentences("Really?! Yes... ok"), ["Really?!", "Yes...", "ok"]);
    }
}
