//! Text normalization and conversion to bounded token-id sequences.
//!
//! Normalization applies, in order: Unicode NFKC, URL removal, emoji removal,
//! reduction of repeated punctuation, and whitespace collapsing. The pipeline
//! is iterated to a fixed point so the operation is idempotent even when a
//! removal step exposes new removable material (e.g. an emoji splitting a
//! `www.` prefix).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_properties::emoji::{
    is_emoji_presentation_selector, is_regional_indicator, is_tag_character,
    is_text_presentation_selector, is_zwj,
};
use unicode_properties::{EmojiStatus, GeneralCategoryGroup, UnicodeEmoji, UnicodeGeneralCategory};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("vocabulary size limit must exceed the {RESERVED_LEN} reserved tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("truncation length must be at least 1")]
    BadTruncationLength,
    #[error("vocabulary file is malformed: {0}")]
    MalformedVocabFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Flags for the normalization pipeline. All steps default to enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub apply_nfkc: bool,
    pub strip_urls: bool,
    pub strip_emoji: bool,
    pub collapse_whitespace: bool,
    pub dedupe_punctuation: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            apply_nfkc: true,
            strip_urls: true,
            strip_emoji: true,
            collapse_whitespace: true,
            dedupe_punctuation: true,
        }
    }
}

/// Normalize `text` per `config`. Idempotent; may return an empty string.
pub fn normalize_text(text: &str, config: &NormalizationConfig) -> String {
    let mut current = text.to_string();
    // A single pass handles ordinary text; pathological inputs where a
    // removal exposes new removable material converge in a few passes.
    for _ in 0..8 {
        let next = normalize_pass(&current, config);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_pass(text: &str, config: &NormalizationConfig) -> String {
    let mut s = if config.apply_nfkc {
        text.nfkc().collect::<String>()
    } else {
        text.to_string()
    };
    if config.strip_urls {
        s = remove_urls(&s);
    }
    if config.strip_emoji {
        s = remove_emoji(&s);
    }
    if config.dedupe_punctuation {
        s = dedupe_punctuation(&s);
    }
    if config.collapse_whitespace {
        s = collapse_whitespace(&s);
    }
    s
}

/// Remove maximal substrings starting `http://`, `https://`, or `www.`
/// up to the next whitespace character.
fn remove_urls(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let lower: Vec<char> = chars
        .iter()
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let starts_with = |at: usize, pat: &str| -> bool {
        pat.chars()
            .enumerate()
            .all(|(k, p)| lower.get(at + k) == Some(&p))
    };
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if starts_with(i, "http://") || starts_with(i, "https://") || starts_with(i, "www.") {
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Emoji with default emoji presentation are always stripped. Text-default
/// emoji characters (`#`, `*`, digits, `©` ...) are stripped only when an
/// emoji presentation selector asks for emoji rendering. Variation selectors,
/// ZWJ, skin-tone modifiers, keycaps, and tag characters are stripped as part
/// of the surrounding emoji sequence.
fn remove_emoji(text: &str) -> String {
    const KEYCAP: char = '\u{20E3}';
    let chars: Vec<char> = text.chars().collect();
    let is_emoji_default = |c: char| {
        matches!(
            c.emoji_status(),
            EmojiStatus::EmojiPresentation
                | EmojiStatus::EmojiModifierBase
                | EmojiStatus::EmojiPresentationAndModifierBase
                | EmojiStatus::EmojiPresentationAndEmojiComponent
                | EmojiStatus::EmojiPresentationAndModifierAndEmojiComponent
        ) || is_regional_indicator(c)
    };
    let is_emoji_capable = |c: char| !matches!(c.emoji_status(), EmojiStatus::NonEmoji);

    let mut drop = vec![false; chars.len()];
    for (i, &c) in chars.iter().enumerate() {
        if is_emoji_default(c) {
            drop[i] = true;
        } else if is_emoji_capable(c)
            && chars.get(i + 1).copied().map(is_emoji_presentation_selector) == Some(true)
        {
            // text-default emoji promoted to emoji presentation
            drop[i] = true;
            drop[i + 1] = true;
        }
    }
    // sweep up sequence glue attached to dropped characters
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..chars.len() {
            if drop[i] {
                continue;
            }
            let c = chars[i];
            let prev_dropped = i > 0 && drop[i - 1];
            let next_dropped = i + 1 < chars.len() && drop[i + 1];
            let glue = if is_zwj(c) {
                prev_dropped || next_dropped
            } else if is_emoji_presentation_selector(c)
                || is_text_presentation_selector(c)
                || c == KEYCAP
                || is_tag_character(c)
                || matches!(c.emoji_status(), EmojiStatus::NonEmojiButEmojiComponent)
            {
                prev_dropped
            } else {
                false
            };
            if glue {
                drop[i] = true;
                changed = true;
            }
        }
    }
    chars
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(&c, _)| c)
        .collect()
}

/// Runs of two or more identical punctuation characters collapse to one.
fn dedupe_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    for c in text.chars() {
        let is_punct = c.general_category_group() == GeneralCategoryGroup::Punctuation;
        if is_punct && prev == Some(c) {
            continue;
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;
pub const SEP_ID: u32 = 4;

pub const RESERVED_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]"];
pub const RESERVED_LEN: usize = RESERVED_TOKENS.len();

/// Word-level vocabulary with dense ids; the five reserved tokens occupy
/// ids 0..5. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from whitespace-split word frequencies over `texts`: rank by
    /// frequency (descending) then token (ascending), keep the top
    /// `max_size - 5` with count >= `min_frequency`.
    pub fn build<S: AsRef<str>>(
        texts: &[S],
        max_size: usize,
        min_frequency: usize,
    ) -> Result<Vocabulary, PreprocessError> {
        if max_size <= RESERVED_LEN {
            return Err(PreprocessError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for word in text.as_ref().split_whitespace() {
                if RESERVED_TOKENS.contains(&word) {
                    continue;
                }
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_frequency.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - RESERVED_LEN);

        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|t| t.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn is_reserved(id: u32) -> bool {
        (id as usize) < RESERVED_LEN
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<(), PreprocessError> {
        let mut out = String::new();
        for token in &self.id_to_token {
            out.push_str(token);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, PreprocessError> {
        let content = std::fs::read_to_string(path)?;
        let id_to_token: Vec<String> = content.lines().map(str::to_string).collect();
        if id_to_token.len() < RESERVED_LEN {
            return Err(PreprocessError::MalformedVocabFile(format!(
                "only {} lines, expected at least {}",
                id_to_token.len(),
                RESERVED_LEN
            )));
        }
        for (i, reserved) in RESERVED_TOKENS.iter().enumerate() {
            if id_to_token[i] != *reserved {
                return Err(PreprocessError::MalformedVocabFile(format!(
                    "line {i} should be the reserved token {reserved}, found {:?}",
                    id_to_token[i]
                )));
            }
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(PreprocessError::MalformedVocabFile(format!(
                    "duplicate token {t:?} at line {i}"
                )));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }
}

/// An ordered list of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.ids)
    }
}

/// Whitespace word split; out-of-vocabulary words map to `[UNK]`. Reserved
/// token surface forms in plain text also map to `[UNK]` so tokenize never
/// fabricates control ids.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSequence {
    let ids = text
        .split_whitespace()
        .map(|word| match vocab.id(word) {
            Some(id) if !Vocabulary::is_reserved(id) => id,
            _ => UNK_ID,
        })
        .collect();
    TokenSequence::new(ids)
}

/// Join tokens with single spaces. Errors on ids outside the vocabulary.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> Result<String, PreprocessError> {
    let mut words = Vec::with_capacity(seq.len());
    for &id in &seq.ids {
        match vocab.token(id) {
            Some(tok) => words.push(tok),
            None => {
                return Err(PreprocessError::IdOutOfRange {
                    id,
                    size: vocab.len(),
                })
            }
        }
    }
    Ok(words.join(" "))
}

/// Like `detokenize` but drops reserved tokens; used to render generated text.
pub fn detokenize_clean(
    seq: &TokenSequence,
    vocab: &Vocabulary,
) -> Result<String, PreprocessError> {
    let mut words = Vec::with_capacity(seq.len());
    for &id in &seq.ids {
        match vocab.token(id) {
            Some(tok) => {
                if !Vocabulary::is_reserved(id) {
                    words.push(tok);
                }
            }
            None => {
                return Err(PreprocessError::IdOutOfRange {
                    id,
                    size: vocab.len(),
                })
            }
        }
    }
    Ok(words.join(" "))
}

/// Keep the first `max_len` ids; no-op when already short enough.
pub fn truncate(seq: &TokenSequence, max_len: usize) -> Result<TokenSequence, PreprocessError> {
    if max_len < 1 {
        return Err(PreprocessError::BadTruncationLength);
    }
    if seq.len() <= max_len {
        return Ok(seq.clone());
    }
    Ok(TokenSequence::new(seq.ids[..max_len].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> String {
        normalize_text(s, &NormalizationConfig::default())
    }

    #[test]
    fn url_removal() {
        assert_eq!(norm("দেখুন https://x.example/page এখানে"), "দেখুন এখানে");
        assert_eq!(norm("go to www.example.com now"), "go to now");
        assert_eq!(norm("http://only"), "");
    }

    #[test]
    fn whitespace_and_punctuation_rules() {
        assert_eq!(norm("a   b!!!"), "a b!");
        assert_eq!(norm("  lead trail  "), "lead trail");
        assert_eq!(norm("mixed!? runs??"), "mixed!? runs?");
    }

    #[test]
    fn nfkc_compatibility_codepoints() {
        assert_eq!(norm("ﬁle ５"), "file 5");
        assert_eq!(norm("\u{FF41}"), "a"); // fullwidth a
    }

    #[test]
    fn emoji_removal_including_sequences() {
        assert_eq!(norm("ভালো 😀 খবর"), "ভালো খবর");
        assert_eq!(norm("crew 👩\u{200D}🚀 launch"), "crew launch");
        assert_eq!(norm("flag 🇧🇩 day"), "flag day");
        // keycap: digit + VS16 + combining keycap
        assert_eq!(norm("pick 1\u{FE0F}\u{20E3} now"), "pick now");
        // plain digits and hash are not emoji by default
        assert_eq!(norm("tag #5 kept"), "tag #5 kept");
    }

    #[test]
    fn normalize_is_idempotent_on_tricky_inputs() {
        let cases = [
            "ww🙂w.example.com stays gone",
            "a\u{00A0}b", // NBSP collapses under NFKC + whitespace pass
            "１２３ www.x !!",
            "👍🏽👍🏽 doubled",
        ];
        for case in cases {
            let once = norm(case);
            assert_eq!(norm(&once), once, "not idempotent for {case:?}");
        }
    }

    #[test]
    fn empty_output_is_permitted() {
        assert_eq!(norm("😀😀"), "");
        assert_eq!(norm(""), "");
    }

    #[test]
    fn vocabulary_build_orders_by_frequency_then_token() {
        let vocab = Vocabulary::build(&["a a b"], 8, 1).unwrap();
        assert_eq!(vocab.len(), 7);
        assert_eq!(vocab.token(5), Some("a"));
        assert_eq!(vocab.token(6), Some("b"));
        for (i, tok) in RESERVED_TOKENS.iter().enumerate() {
            assert_eq!(vocab.token(i as u32), Some(*tok));
        }
    }

    #[test]
    fn vocabulary_ties_break_lexicographically() {
        let vocab = Vocabulary::build(&["b a c"], 10, 1).unwrap();
        assert_eq!(vocab.token(5), Some("a"));
        assert_eq!(vocab.token(6), Some("b"));
        assert_eq!(vocab.token(7), Some("c"));
    }

    #[test]
    fn vocabulary_respects_max_size_and_min_frequency() {
        let vocab = Vocabulary::build(&["a a a b b c"], 7, 2).unwrap();
        assert_eq!(vocab.len(), 7);
        assert_eq!(vocab.id("c"), None);
        let capped = Vocabulary::build(&["a a a b b c"], 6, 1).unwrap();
        assert_eq!(capped.len(), 6);
        assert_eq!(capped.id("a"), Some(5));
        assert_eq!(capped.id("b"), None);
    }

    #[test]
    fn empty_text_list_gives_reserved_only() {
        let vocab = Vocabulary::build::<&str>(&[], 100, 1).unwrap();
        assert_eq!(vocab.len(), RESERVED_LEN);
    }

    #[test]
    fn max_size_at_or_below_reserved_is_an_error() {
        assert!(matches!(
            Vocabulary::build(&["a"], 5, 1),
            Err(PreprocessError::VocabTooSmall(5))
        ));
    }

    #[test]
    fn rebuild_is_deterministic() {
        let texts = ["x y y z", "z z q"];
        let a = Vocabulary::build(&texts, 64, 1).unwrap();
        let b = Vocabulary::build(&texts, 64, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tokenize_maps_known_and_unknown() {
        let vocab = Vocabulary::build(&["a b"], 16, 1).unwrap();
        let seq = tokenize("a z", &vocab);
        assert_eq!(seq.ids, vec![vocab.id("a").unwrap(), UNK_ID]);
    }

    #[test]
    fn tokenize_never_emits_reserved_ids() {
        let vocab = Vocabulary::build(&["a"], 16, 1).unwrap();
        let seq = tokenize("[SEP] [PAD] [BOS] [EOS] a", &vocab);
        assert!(seq.ids.iter().all(|&id| id == UNK_ID || !Vocabulary::is_reserved(id)));
    }

    #[test]
    fn round_trip_in_vocabulary_text() {
        let vocab = Vocabulary::build(&["the cat sat"], 16, 1).unwrap();
        let text = "the cat sat";
        let round = detokenize(&tokenize(text, &vocab), &vocab).unwrap();
        assert_eq!(round, text);
    }

    #[test]
    fn detokenize_rejects_out_of_range() {
        let vocab = Vocabulary::build(&["a"], 16, 1).unwrap();
        let bad = TokenSequence::new(vec![999]);
        assert!(matches!(
            detokenize(&bad, &vocab),
            Err(PreprocessError::IdOutOfRange { id: 999, .. })
        ));
    }

    #[test]
    fn truncate_contract() {
        let seq = TokenSequence::new((0..600).map(|i| i % 7 + 5).collect());
        let cut = truncate(&seq, 512).unwrap();
        assert_eq!(cut.len(), 512);
        assert_eq!(cut.ids[..], seq.ids[..512]);
        let short = TokenSequence::new(vec![5, 6, 7]);
        assert_eq!(truncate(&short, 512).unwrap(), short);
        assert_eq!(truncate(&cut, 512).unwrap(), cut);
        assert!(truncate(&seq, 0).is_err());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = Vocabulary::build(&["আমি ভালো আছি", "ভালো দিন"], 32, 1).unwrap();
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab, loaded);
    }
}
