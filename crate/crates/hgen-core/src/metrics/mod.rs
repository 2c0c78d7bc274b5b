//! Text-generation evaluation metrics implemented from their definitions:
//! ROUGE-1/2/L, BLEU with brevity penalty, METEOR with the fragmentation
//! penalty, and BERTScore over pluggable token embeddings.

mod embedding;
mod meteor;

pub use embedding::{EmbeddingProvider, FixedEmbedder, HashEmbedder, PpmiEmbedder};
pub use meteor::meteor;

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0}")]
    BadParameter(String),
    #[error("candidate and reference lists have different lengths ({left} vs {right})")]
    Pairing { left: usize, right: usize },
    #[error("token list must be non-empty")]
    EmptyInput,
}

/// Precision/recall/F1 triple; F1 = 2PR/(P+R), or 0 when P+R = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PRF {
    pub fn from_pr(precision: f64, recall: f64) -> PRF {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PRF {
            precision,
            recall,
            f1,
        }
    }

    fn scaled(self, factor: f64) -> PRF {
        PRF {
            precision: self.precision * factor,
            recall: self.recall * factor,
            f1: self.f1 * factor,
        }
    }
}

/// Longest common subsequence length via dynamic programming.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for item in a {
        for (j, other) in b.iter().enumerate() {
            row[j + 1] = if item == other {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in text::ngrams(tokens, n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    let total: usize = cand.values().sum();
    let matched: usize = cand
        .iter()
        .map(|(gram, &count)| count.min(refr.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// N-gram overlap with clipped counts. Zero PRF when either side has no
/// n-grams.
pub fn rouge_n<T: Eq + Hash>(
    candidate: &[T],
    reference: &[T],
    n: usize,
) -> Result<PRF, MetricsError> {
    if n < 1 {
        return Err(MetricsError::BadParameter(
            "n-gram order must be at least 1".into(),
        ));
    }
    let (matched, cand_total) = clipped_matches(candidate, reference, n);
    let ref_total = reference.len().saturating_sub(n - 1);
    if cand_total == 0 || ref_total == 0 {
        return Ok(PRF::default());
    }
    Ok(PRF::from_pr(
        matched as f64 / cand_total as f64,
        matched as f64 / ref_total as f64,
    ))
}

/// Longest-common-subsequence overlap.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> PRF {
    if candidate.is_empty() || reference.is_empty() {
        return PRF::default();
    }
    let lcs = lcs_length(candidate, reference) as f64;
    PRF::from_pr(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

/// BLEU's multiplicative penalty for short candidates: 1 when c > r, else
/// exp(1 - r/c); 0 by convention when the candidate is empty.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        return 0.0;
    }
    if candidate_len > reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Corpus-level BLEU: clipped match and candidate totals are summed over all
/// pairs per n, combined as BP * exp(mean log precision). Unsmoothed: any
/// zero precision gives 0.
pub fn bleu<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::Pairing {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if max_n < 1 {
        return Err(MetricsError::BadParameter(
            "maximum n-gram order must be at least 1".into(),
        ));
    }
    let mut matched = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refr) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += refr.len();
        for n in 1..=max_n {
            let (m, t) = clipped_matches(cand, refr, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        if matched[n] == 0 || totals[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / totals[n] as f64).ln();
    }
    Ok(brevity_penalty(cand_len, ref_len) * (log_sum / max_n as f64).exp())
}

/// Single-pair BLEU with add-one smoothing for orders >= 2, so one missing
/// higher-order match does not zero the score.
pub fn sentence_bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    if max_n < 1 || candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = clipped_matches(candidate, reference, n);
        let precision = if n == 1 {
            if m == 0 || t == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else {
            (m + 1) as f64 / (t + 1) as f64
        };
        log_sum += precision.ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp()
}

/// Greedy-matching embedding similarity (BERTScore). Cosines are clamped to
/// [0, 1] so the PRF range invariants hold.
pub fn bertscore<E: EmbeddingProvider + ?Sized>(
    candidate: &[String],
    reference: &[String],
    embedder: &E,
) -> Result<PRF, MetricsError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let cand_vecs: Vec<Vec<f64>> = candidate.iter().map(|t| embedder.embed(t)).collect();
    let ref_vecs: Vec<Vec<f64>> = reference.iter().map(|t| embedder.embed(t)).collect();
    let cosine = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot.clamp(0.0, 1.0)
    };
    let best_against = |from: &[Vec<f64>], against: &[Vec<f64>]| -> f64 {
        let sum: f64 = from
            .iter()
            .map(|x| {
                against
                    .iter()
                    .map(|y| cosine(x, y))
                    .fold(0.0f64, f64::max)
            })
            .sum();
        sum / from.len() as f64
    };
    Ok(PRF::from_pr(
        best_against(&cand_vecs, &ref_vecs),
        best_against(&ref_vecs, &cand_vecs),
    ))
}

/// Value scale of a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Unit,
    Percent,
}

/// Aggregated scores for one generated-vs-reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge1: PRF,
    pub rouge2: PRF,
    pub rouge_l: PRF,
    pub meteor: f64,
    pub bertscore: PRF,
    pub scale: Scale,
}

impl MetricReport {
    pub fn to_percent(&self) -> MetricReport {
        match self.scale {
            Scale::Percent => self.clone(),
            Scale::Unit => MetricReport {
                bleu: self.bleu * 100.0,
                rouge1: self.rouge1.scaled(100.0),
                rouge2: self.rouge2.scaled(100.0),
                rouge_l: self.rouge_l.scaled(100.0),
                meteor: self.meteor * 100.0,
                bertscore: self.bertscore.scaled(100.0),
                scale: Scale::Percent,
            },
        }
    }

    /// The flat serialization schema: single values per metric (ROUGE as F1)
    /// plus the BERTScore triple.
    pub fn to_flat(&self) -> FlatMetricReport {
        FlatMetricReport {
            bleu: self.bleu,
            rouge1: self.rouge1.f1,
            rouge2: self.rouge2.f1,
            rouge_l: self.rouge_l.f1,
            meteor: self.meteor,
            bertscore_p: self.bertscore.precision,
            bertscore_r: self.bertscore.recall,
            bertscore_f1: self.bertscore.f1,
            scale: self.scale,
        }
    }
}

/// Flat JSON form: keys bleu, rouge1, rouge2, rougeL, meteor, bertscore_p,
/// bertscore_r, bertscore_f1, scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatMetricReport {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub meteor: f64,
    pub bertscore_p: f64,
    pub bertscore_r: f64,
    pub bertscore_f1: f64,
    pub scale: Scale,
}

impl FlatMetricReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Metric name -> value map used by comparison tables.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("bleu", self.bleu),
            ("rouge1", self.rouge1),
            ("rouge2", self.rouge2),
            ("rougeL", self.rouge_l),
            ("meteor", self.meteor),
            ("bertscore_f1", self.bertscore_f1),
        ]
    }
}

/// Tokenize one text for metric computation: normalization followed by the
/// corpus word tokenizer.
pub fn metric_tokens(text_in: &str) -> Vec<String> {
    let normalized =
        crate::preprocess::normalize_text(text_in, &crate::preprocess::NormalizationConfig::default());
    text::word_tokens(&normalized)
}

/// Corpus evaluation: BLEU at the corpus level; ROUGE, METEOR, and BERTScore
/// averaged over pairs. Pairs where either side tokenizes to nothing score 0
/// on the per-pair metrics. The report is at unit scale.
pub fn evaluate_corpus<E: EmbeddingProvider + ?Sized>(
    generated: &[String],
    references: &[String],
    embedder: &E,
) -> Result<MetricReport, MetricsError> {
    if generated.len() != references.len() {
        return Err(MetricsError::Pairing {
            left: generated.len(),
            right: references.len(),
        });
    }
    if generated.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let gen_tokens: Vec<Vec<String>> = generated.iter().map(|t| metric_tokens(t)).collect();
    let ref_tokens: Vec<Vec<String>> = references.iter().map(|t| metric_tokens(t)).collect();

    let n = generated.len() as f64;
    let mut rouge1_sum = PRF::default();
    let mut rouge2_sum = PRF::default();
    let mut rouge_l_sum = PRF::default();
    let mut meteor_sum = 0.0;
    let mut bert_sum = PRF::default();
    let add = |acc: &mut PRF, x: PRF| {
        acc.precision += x.precision;
        acc.recall += x.recall;
        acc.f1 += x.f1;
    };
    for (cand, refr) in gen_tokens.iter().zip(&ref_tokens) {
        add(&mut rouge1_sum, rouge_n(cand, refr, 1)?);
        add(&mut rouge2_sum, rouge_n(cand, refr, 2)?);
        add(&mut rouge_l_sum, rouge_l(cand, refr));
        meteor_sum += meteor(cand, refr);
        let bert = if cand.is_empty() || refr.is_empty() {
            PRF::default()
        } else {
            bertscore(cand, refr, embedder)?
        };
        add(&mut bert_sum, bert);
    }
    Ok(MetricReport {
        bleu: bleu(&gen_tokens, &ref_tokens, 4)?,
        rouge1: rouge1_sum.scaled(1.0 / n),
        rouge2: rouge2_sum.scaled(1.0 / n),
        rouge_l: rouge_l_sum.scaled(1.0 / n),
        meteor: meteor_sum / n,
        bertscore: bert_sum.scaled(1.0 / n),
        scale: Scale::Unit,
    })
}
