//! Model-input assembly: baseline (article only) and fused inputs that append
//! category, aspect, and sentiment segments behind separator tokens.
//!
//! Segment order is fixed: prefix, article, category, aspect, sentiment.
//! Each included context segment is preceded by one separator. Truncation
//! removes article tokens from the article segment's tail first, so context
//! segments survive whenever the budget allows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::NewsRecord;
use crate::preprocess::{
    normalize_text, tokenize, NormalizationConfig, TokenSequence, Vocabulary, RESERVED_LEN, SEP_ID,
};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("article is empty after normalization")]
    EmptyArticle,
    #[error("separator id {0} is not a reserved vocabulary token")]
    BadSeparator(u32),
    #[error("maximum input length must be at least 1")]
    BadMaxLen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub include_category: bool,
    pub include_aspect: bool,
    pub include_sentiment: bool,
    /// Must be one of the reserved vocabulary ids.
    pub separator: u32,
    pub task_prefix: String,
    pub normalization: NormalizationConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            include_category: true,
            include_aspect: true,
            include_sentiment: true,
            separator: SEP_ID,
            task_prefix: "Summarize the Article as Headlines".to_string(),
            normalization: NormalizationConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if (self.separator as usize) >= RESERVED_LEN {
            return Err(FusionError::BadSeparator(self.separator));
        }
        Ok(())
    }

    /// Number of context segments a fused input will carry.
    pub fn included_segments(&self) -> usize {
        usize::from(self.include_category)
            + usize::from(self.include_aspect)
            + usize::from(self.include_sentiment)
    }
}

/// (start, length) offsets of each segment inside the id sequence. Omitted
/// segments have length 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentSpans {
    pub prefix: (usize, usize),
    pub article: (usize, usize),
    pub category: (usize, usize),
    pub aspect: (usize, usize),
    pub sentiment: (usize, usize),
}

/// A fully assembled model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionInput {
    pub ids: TokenSequence,
    pub spans: SegmentSpans,
}

impl FusionInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn separator_count(&self, separator: u32) -> usize {
        self.ids.ids.iter().filter(|&&id| id == separator).count()
    }

    /// Human-readable rendering with reserved tokens visible.
    pub fn render(&self, vocab: &Vocabulary) -> String {
        self.ids
            .ids
            .iter()
            .map(|&id| vocab.token(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One debug-dump line: `id <TAB> rendered-input`.
    pub fn dump_line(&self, record_id: usize, vocab: &Vocabulary) -> String {
        format!("{record_id}\t{}", self.render(vocab))
    }
}

/// Content-only input: task prefix plus the normalized article, truncated to
/// `max_len`. No separators, context spans empty.
pub fn build_baseline_input(
    record: &NewsRecord,
    vocab: &Vocabulary,
    config: &FusionConfig,
    max_len: usize,
) -> Result<FusionInput, FusionError> {
    let parts = tokenize_parts(record, vocab, config)?;
    if max_len < 1 {
        return Err(FusionError::BadMaxLen);
    }
    let budget = max_len.saturating_sub(parts.prefix.len());
    let article: Vec<u32> = parts.article.iter().copied().take(budget).collect();
    let mut ids = parts.prefix.clone();
    ids.extend_from_slice(&article);
    ids.truncate(max_len);
    let spans = SegmentSpans {
        prefix: (0, parts.prefix.len().min(ids.len())),
        article: (parts.prefix.len().min(ids.len()), article.len()),
        ..SegmentSpans::default()
    };
    Ok(FusionInput {
        ids: TokenSequence::new(ids),
        spans,
    })
}

/// Fused input: prefix, article, then one `[SEP]` plus label tokens for each
/// included context segment, in the order category, aspect, sentiment.
/// Truncation to `max_len` trims article tokens only, keeping every included
/// context segment intact whenever `max_len` covers prefix + context.
pub fn build_multigen_input(
    record: &NewsRecord,
    vocab: &Vocabulary,
    config: &FusionConfig,
    max_len: usize,
) -> Result<FusionInput, FusionError> {
    let parts = tokenize_parts(record, vocab, config)?;
    if max_len < 1 {
        return Err(FusionError::BadMaxLen);
    }

    let mut context: Vec<(usize, Vec<u32>)> = Vec::new(); // (segment tag, label ids)
    if config.include_category {
        context.push((0, tokenize(record.category.as_str(), vocab).ids));
    }
    if config.include_aspect {
        context.push((1, tokenize(record.aspect.as_str(), vocab).ids));
    }
    if config.include_sentiment {
        context.push((2, tokenize(record.sentiment.as_str(), vocab).ids));
    }
    let context_len: usize = context.iter().map(|(_, ids)| ids.len() + 1).sum();

    // article gets whatever the fixed parts leave over
    let fixed = parts.prefix.len() + context_len;
    let article_budget = max_len.saturating_sub(fixed);
    let article: Vec<u32> = parts
        .article
        .iter()
        .copied()
        .take(article_budget)
        .collect();

    let mut ids: Vec<u32> = Vec::with_capacity(fixed + article.len());
    let mut spans = SegmentSpans {
        prefix: (0, parts.prefix.len()),
        ..SegmentSpans::default()
    };
    ids.extend_from_slice(&parts.prefix);
    spans.article = (ids.len(), article.len());
    ids.extend_from_slice(&article);
    for (tag, label_ids) in &context {
        ids.push(config.separator);
        let span = (ids.len(), label_ids.len());
        ids.extend_from_slice(label_ids);
        match tag {
            0 => spans.category = span,
            1 => spans.aspect = span,
            _ => spans.sentiment = span,
        }
    }
    // degenerate budgets: keep the head once articles can no longer give
    if ids.len() > max_len {
        ids.truncate(max_len);
        spans = clip_spans(spans, max_len);
    }
    Ok(FusionInput {
        ids: TokenSequence::new(ids),
        spans,
    })
}

struct TokenizedParts {
    prefix: Vec<u32>,
    article: Vec<u32>,
}

fn tokenize_parts(
    record: &NewsRecord,
    vocab: &Vocabulary,
    config: &FusionConfig,
) -> Result<TokenizedParts, FusionError> {
    config.validate()?;
    let normalized = normalize_text(&record.article, &config.normalization);
    let article = tokenize(&normalized, vocab).ids;
    if article.is_empty() {
        return Err(FusionError::EmptyArticle);
    }
    let prefix = if config.task_prefix.is_empty() {
        Vec::new()
    } else {
        tokenize(&config.task_prefix, vocab).ids
    };
    Ok(TokenizedParts { prefix, article })
}

fn clip_spans(spans: SegmentSpans, max_len: usize) -> SegmentSpans {
    let clip = |(start, len): (usize, usize)| -> (usize, usize) {
        if start >= max_len {
            (max_len, 0)
        } else {
            (start, len.min(max_len - start))
        }
    };
    SegmentSpans {
        prefix: clip(spans.prefix),
        article: clip(spans.article),
        category: clip(spans.category),
        aspect: clip(spans.aspect),
        sentiment: clip(spans.sentiment),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AspectLabel, CategoryLabel, SentimentLabel};
    use crate::preprocess::Vocabulary;

    fn record(article: &str) -> NewsRecord {
        NewsRecord {
            article: article.to_string(),
            headline: "headline words".to_string(),
            category: CategoryLabel::Islam,
            aspect: AspectLabel::Report,
            sentiment: SentimentLabel::Positive,
        }
    }

    fn vocab_for(texts: &[&str]) -> Vocabulary {
        let mut all: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
        all.push("Summarize the Article as Headlines".into());
        all.push("Islam Hinduism Christianity Buddhism Others".into());
        all.push("Report Festival Education Culture".into());
        all.push("Positive Negative Neutral".into());
        Vocabulary::build(&all, 256, 1).unwrap()
    }

    #[test]
    fn baseline_is_prefix_then_article_without_separators() {
        let vocab = vocab_for(&["alpha beta"]);
        let rec = record("alpha beta");
        let input =
            build_baseline_input(&rec, &vocab, &FusionConfig::default(), 512).unwrap();
        assert_eq!(input.separator_count(SEP_ID), 0);
        let rendered = input.render(&vocab);
        assert_eq!(rendered, "Summarize the Article as Headlines alpha beta");
        assert_eq!(input.spans.prefix, (0, 5));
        assert_eq!(input.spans.article, (5, 2));
        assert_eq!(input.spans.category.1, 0);
    }

    #[test]
    fn multigen_appends_context_segments_in_order() {
        let vocab = vocab_for(&["alpha beta"]);
        let rec = record("alpha beta");
        let input =
            build_multigen_input(&rec, &vocab, &FusionConfig::default(), 512).unwrap();
        assert_eq!(
            input.render(&vocab),
            "Summarize the Article as Headlines alpha beta [SEP] Islam [SEP] Report [SEP] Positive"
        );
        assert_eq!(input.separator_count(SEP_ID), 3);
    }

    #[test]
    fn all_flags_off_equals_baseline() {
        let vocab = vocab_for(&["alpha beta gamma"]);
        let rec = record("alpha beta gamma");
        let config = FusionConfig {
            include_category: false,
            include_aspect: false,
            include_sentiment: false,
            ..FusionConfig::default()
        };
        let fused = build_multigen_input(&rec, &vocab, &config, 512).unwrap();
        let baseline = build_baseline_input(&rec, &vocab, &config, 512).unwrap();
        assert_eq!(fused, baseline);
    }

    #[test]
    fn single_flag_yields_single_separator() {
        let vocab = vocab_for(&["alpha beta"]);
        let rec = record("alpha beta");
        let config = FusionConfig {
            include_category: false,
            include_aspect: false,
            include_sentiment: true,
            ..FusionConfig::default()
        };
        let input = build_multigen_input(&rec, &vocab, &config, 512).unwrap();
        assert_eq!(
            input.render(&vocab),
            "Summarize the Article as Headlines alpha beta [SEP] Positive"
        );
        assert_eq!(input.separator_count(SEP_ID), 1);
    }

    #[test]
    fn truncation_trims_article_not_context() {
        let vocab = vocab_for(&["w0 w1 w2 w3 w4 w5 w6 w7 w8 w9"]);
        let long_article = (0..600)
            .map(|i| format!("w{}", i % 10))
            .collect::<Vec<_>>()
            .join(" ");
        let rec = record(&long_article);
        let config = FusionConfig::default();
        let input = build_multigen_input(&rec, &vocab, &config, 32).unwrap();
        assert_eq!(input.len(), 32);
        assert_eq!(input.separator_count(SEP_ID), 3);
        let rendered = input.render(&vocab);
        assert!(rendered.ends_with("[SEP] Islam [SEP] Report [SEP] Positive"));
        // article got 32 - 5 (prefix) - 6 (separators + labels) = 21 tokens
        assert_eq!(input.spans.article.1, 21);
    }

    #[test]
    fn input_truncates_to_512_from_600_tokens() {
        let vocab = vocab_for(&["tok"]);
        let article = vec!["tok"; 600].join(" ");
        let rec = record(&article);
        let input =
            build_baseline_input(&rec, &vocab, &FusionConfig::default(), 512).unwrap();
        assert_eq!(input.len(), 512);
    }

    #[test]
    fn empty_article_after_normalization_is_an_error() {
        let vocab = vocab_for(&["x"]);
        let rec = record("😀 https://example.com");
        let err = build_baseline_input(&rec, &vocab, &FusionConfig::default(), 512);
        assert!(matches!(err, Err(FusionError::EmptyArticle)));
        let err = build_multigen_input(&rec, &vocab, &FusionConfig::default(), 512);
        assert!(matches!(err, Err(FusionError::EmptyArticle)));
    }

    #[test]
    fn length_accounting_pre_truncation() {
        let vocab = vocab_for(&["alpha beta gamma delta"]);
        let rec = record("alpha beta gamma delta");
        let config = FusionConfig::default();
        let baseline = build_baseline_input(&rec, &vocab, &config, 4096).unwrap();
        let fused = build_multigen_input(&rec, &vocab, &config, 4096).unwrap();
        // three single-token labels plus three separators
        assert_eq!(fused.len(), baseline.len() + 3 + 3);
    }

    #[test]
    fn fusion_is_deterministic() {
        let vocab = vocab_for(&["alpha beta"]);
        let rec = record("alpha beta");
        let a = build_multigen_input(&rec, &vocab, &FusionConfig::default(), 64).unwrap();
        let b = build_multigen_input(&rec, &vocab, &FusionConfig::default(), 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_separator_is_rejected() {
        let vocab = vocab_for(&["alpha"]);
        let rec = record("alpha");
        let config = FusionConfig {
            separator: 99,
            ..FusionConfig::default()
        };
        assert!(matches!(
            build_multigen_input(&rec, &vocab, &config, 64),
            Err(FusionError::BadSeparator(99))
        ));
    }

    #[test]
    fn empty_prefix_is_allowed() {
        let vocab = vocab_for(&["alpha"]);
        let rec = record("alpha");
        let config = FusionConfig {
            task_prefix: String::new(),
            ..FusionConfig::default()
        };
        let input = build_baseline_input(&rec, &vocab, &config, 64).unwrap();
        assert_eq!(input.render(&vocab), "alpha");
        assert_eq!(input.spans.prefix, (0, 0));
    }
}
