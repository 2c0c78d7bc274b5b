//! Word and sentence segmentation shared by corpus statistics and metrics.
//!
//! This is the single tokenization authority for counting: split on Unicode
//! whitespace, then strip leading/trailing punctuation from each piece. A
//! token is any nonempty residue. Sentences are delimited by the Bengali
//! danda, `?`, `!`, and the ASCII full stop, with runs of terminators
//! collapsed.

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

const DANDA: char = '\u{0964}';

fn is_strippable_punct(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Word tokens of `text`: whitespace split, punctuation trimmed at both ends.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let trimmed = piece.trim_matches(is_strippable_punct);
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_string())
            }
        })
        .collect()
}

/// Number of word tokens without allocating token strings.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|piece| !piece.trim_matches(is_strippable_punct).is_empty())
        .count()
}

fn is_sentence_terminator(c: char) -> bool {
    c == DANDA || c == '?' || c == '!' || c == '.'
}

/// Number of sentences: nonblank segments between terminator runs.
/// Text without any terminator counts as one sentence.
pub fn sentence_count(text: &str) -> usize {
    text.split(is_sentence_terminator)
        .filter(|segment| !segment.trim().is_empty())
        .count()
}

/// Successive n-grams of `tokens` as slices; empty when `tokens.len() < n`.
pub fn ngrams<T>(tokens: &[T], n: usize) -> impl Iterator<Item = &[T]> {
    assert!(n >= 1, "n-gram order must be at least 1");
    tokens.windows(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_surrounding_punctuation() {
        assert_eq!(word_tokens("\"hello,\" world!"), vec!["hello", "world"]);
    }

    #[test]
    fn tokens_keep_interior_punctuation() {
        assert_eq!(word_tokens("it's a-b"), vec!["it's", "a-b"]);
    }

    #[test]
    fn pure_punctuation_pieces_vanish() {
        assert_eq!(word_tokens("a -- b !!"), vec!["a", "b"]);
        assert_eq!(word_count("a -- b !!"), 2);
    }

    #[test]
    fn bengali_danda_is_stripped_from_tokens() {
        let toks = word_tokens("আমি ভালো আছি।");
        assert_eq!(toks, vec!["আমি", "ভালো", "আছি"]);
    }

    #[test]
    fn sentence_count_collapses_terminator_runs() {
        assert_eq!(sentence_count("এক। দুই।। তিন?!"), 3);
        assert_eq!(sentence_count("no terminator"), 1);
        assert_eq!(sentence_count("one. two! three?"), 3);
        assert_eq!(sentence_count(""), 0);
    }

    #[test]
    fn ngrams_window() {
        let toks = ["a", "b", "c"];
        let bigrams: Vec<_> = ngrams(&toks, 2).collect();
        assert_eq!(bigrams, vec![&["a", "b"][..], &["b", "c"][..]]);
        assert_eq!(ngrams(&toks, 4).count(), 0);
    }
}
