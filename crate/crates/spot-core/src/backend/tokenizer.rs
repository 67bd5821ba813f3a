//! Word-level tokenizer used by the built-in n-gram backend.
//!
//! The rules are deliberately simple so that tokenization is deterministic
//! and dependency-free: input is lowercased, alphanumeric runs become word
//! tokens, every other non-whitespace character becomes a single-character
//! token, and whitespace only separates. The literal `<unk>` placeholder is
//! kept atomic so that detokenized text containing it re-tokenizes stably.

/// Surface form used when detokenizing the reserved unknown-token id.
pub const UNK_TOKEN: &str = "<unk>";

/// Split `text` into lowercased word and punctuation tokens.
///
/// ```
/// use spot_core::backend::tokenizer::tokenize;
/// assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
/// assert_eq!(tokenize("x2  y"), vec!["x2", "y"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let chars: Vec<char> = lower.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if chars[i..].starts_with(&['<', 'u', 'n', 'k', '>']) {
            tokens.push(UNK_TOKEN.to_string());
            i += 5;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

/// Join tokens back into display text with single spaces.
///
/// Lossy with respect to original spacing and case, which is acceptable:
/// the result is only used for display and for re-tokenizing into another
/// backend's vocabulary, and `tokenize(detokenize(t)) == t` holds for any
/// token list this tokenizer can produce.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("The cat, the DOG."),
            vec!["the", "cat", ",", "the", "dog", "."]
        );
    }

    #[test]
    fn digits_are_word_characters() {
        assert_eq!(tokenize("route 66!"), vec!["route", "66", "!"]);
    }

    #[test]
    fn empty_and_whitespace_only_inputs_yield_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n ").is_empty());
    }

    #[test]
    fn unk_placeholder_survives_a_round_trip() {
        let toks = tokenize("before <unk> after");
        assert_eq!(toks, vec!["before", UNK_TOKEN, "after"]);
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }

    #[test]
    fn apostrophes_split_like_any_punctuation() {
        assert_eq!(tokenize("don't"), vec!["don", "'", "t"]);
    }

    #[test]
    fn round_trip_is_stable_for_tokenizer_output() {
        let toks = tokenize("A stray <unk> mark; 12 geese flew (quickly).");
        assert_eq!(tokenize(&detokenize(&toks)), toks);
    }
}
