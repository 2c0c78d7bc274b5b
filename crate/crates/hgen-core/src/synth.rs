//! Deterministic synthetic corpora.
//!
//! `replica_corpus` produces a full-size annotated corpus whose label
//! cross-tabulations match the published reference counts cell by cell and
//! whose length and headline-novelty statistics land close to the published
//! figures. It stands in for the real corpus in environments that cannot
//! fetch it; anything computed over it exercises the same code paths.
//!
//! `sentiment_probe_corpus` produces a corpus where the headline is a pure
//! function of the sentiment label and the article is uninformative filler,
//! so input fusion either works (sentiment visible) or cannot work.

use crate::corpus::{AspectLabel, CategoryLabel, NewsRecord, SentimentLabel};
use crate::rng::Rng;

/// Per-category (aspect counts, sentiment counts) of the reference corpus,
/// in canonical label order.
const CATEGORY_CELLS: [(CategoryLabel, [usize; 4], [usize; 3]); 5] = [
    (CategoryLabel::Islam, [860, 68, 890, 183], [1457, 299, 245]),
    (CategoryLabel::Hinduism, [135, 67, 16, 24], [128, 58, 56]),
    (CategoryLabel::Christianity, [7, 12, 7, 2], [19, 5, 4]),
    (CategoryLabel::Buddhism, [12, 13, 1, 3], [25, 3, 1]),
    (CategoryLabel::Others, [190, 1, 16, 13], [88, 90, 42]),
];

pub const REPLICA_TOTAL: usize = 2520;

const BENGALI_CONSONANTS: [char; 28] = [
    'ক', 'খ', 'গ', 'ঘ', 'চ', 'ছ', 'জ', 'ঝ', 'ট', 'ঠ', 'ড', 'ঢ', 'ত', 'থ', 'দ', 'ধ', 'ন', 'প',
    'ফ', 'ব', 'ভ', 'ম', 'য', 'র', 'ল', 'শ', 'স', 'হ',
];
const BENGALI_VOWEL_SIGNS: [char; 9] = ['া', 'ি', 'ী', 'ু', 'ূ', 'ে', 'ৈ', 'ো', 'ৌ'];
const DANDA: char = '\u{0964}';

fn synth_word(rng: &mut Rng) -> String {
    let syllables = 2 + rng.below(3);
    let mut word = String::new();
    for _ in 0..syllables {
        word.push(*rng.choose(&BENGALI_CONSONANTS));
        if rng.next_f64() < 0.7 {
            word.push(*rng.choose(&BENGALI_VOWEL_SIGNS));
        }
    }
    word
}

fn word_pool(rng: &mut Rng, size: usize) -> Vec<String> {
    let mut pool = Vec::with_capacity(size);
    let mut seen = std::collections::HashSet::new();
    while pool.len() < size {
        let word = synth_word(rng);
        if seen.insert(word.clone()) {
            pool.push(word);
        }
    }
    pool
}

/// Zipf-flavored draw: rank r with weight 1/(r+40).
fn zipf_index(rng: &mut Rng, size: usize) -> usize {
    // inverse-CDF on the harmonic-ish weights, approximated by
    // exponentiating a uniform draw; cheap and heavy-headed
    let u = rng.next_f64();
    let skew = u * u * u;
    ((skew * size as f64) as usize).min(size - 1)
}

/// Article word count: lognormal around the published mean, clamped.
fn article_length(rng: &mut Rng) -> usize {
    let sigma = 0.42f64;
    let mu = (1001.0f64).ln() - sigma * sigma / 2.0;
    let len = (mu + sigma * rng.normal()).exp();
    (len.round() as usize).clamp(140, 3400)
}

fn headline_length(rng: &mut Rng) -> usize {
    let sigma = 0.24f64;
    let mu = (17.13f64).ln() - sigma * sigma / 2.0;
    let len = (mu + sigma * rng.normal()).exp();
    (len.round() as usize).clamp(7, 34)
}

fn build_article(rng: &mut Rng, pool: &[String], words: usize, sentence_len: usize) -> String {
    let mut out = String::new();
    let mut in_sentence = 0usize;
    let mut this_sentence_len = sentence_len;
    for i in 0..words {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&pool[zipf_index(rng, pool.len())]);
        in_sentence += 1;
        if in_sentence >= this_sentence_len && i + 1 < words {
            out.push(DANDA);
            in_sentence = 0;
            this_sentence_len = sentence_len.saturating_sub(6) + rng.below(13).max(1);
        }
    }
    out.push(DANDA);
    out
}

/// Headline: a few contiguous article spans spliced together, plus a small
/// number of novel-word replacements. Replacements drive unigram novelty;
/// splice junctions drive the higher-order rates.
fn build_headline(
    rng: &mut Rng,
    article_tokens: &[String],
    novel_pool: &[String],
    target_len: usize,
) -> String {
    let replacements = match rng.below(100) {
        0..=42 => 0,
        43..=83 => 1,
        _ => 2,
    };
    let mut words: Vec<String> = Vec::with_capacity(target_len + 6);
    while words.len() < target_len {
        let span_len = (4 + rng.below(4)).min(article_tokens.len());
        let start = rng.below((article_tokens.len() - span_len).max(1));
        words.extend_from_slice(&article_tokens[start..start + span_len]);
    }
    words.truncate(target_len);
    for _ in 0..replacements {
        if words.len() < 3 {
            break;
        }
        let at = rng.below(words.len());
        words[at] = novel_pool[rng.below(novel_pool.len())].clone();
    }
    words.join(" ")
}

/// Full-size replica corpus: exact reference cross-tabs, approximate length
/// and novelty statistics. Deterministic per seed.
pub fn replica_corpus(seed: u64) -> Vec<NewsRecord> {
    let mut rng = Rng::new(seed ^ 0x7265706c696361_u64);
    let pool = word_pool(&mut rng, 11_000);
    // novel-word pool is disjoint from the article pool by construction:
    // article text only uses `pool`, so any collision would require the same
    // surface form, which the shared HashSet below rules out
    let novel_pool: Vec<String> = {
        let mut seen: std::collections::HashSet<String> = pool.iter().cloned().collect();
        let mut out = Vec::with_capacity(700);
        while out.len() < 700 {
            let w = synth_word(&mut rng);
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    };

    let mut records = Vec::with_capacity(REPLICA_TOTAL);
    for (category, aspect_counts, sentiment_counts) in CATEGORY_CELLS {
        let mut aspects = Vec::new();
        for (aspect, &count) in AspectLabel::ALL.iter().zip(&aspect_counts) {
            aspects.extend(std::iter::repeat_n(*aspect, count));
        }
        let mut sentiments = Vec::new();
        for (sentiment, &count) in SentimentLabel::ALL.iter().zip(&sentiment_counts) {
            sentiments.extend(std::iter::repeat_n(*sentiment, count));
        }
        debug_assert_eq!(aspects.len(), sentiments.len());
        // shuffling both keeps the per-category marginals while varying the
        // aspect x sentiment joint across seeds
        rng.shuffle(&mut aspects);
        rng.shuffle(&mut sentiments);

        for (aspect, sentiment) in aspects.into_iter().zip(sentiments) {
            let words = article_length(&mut rng);
            let article = build_article(&mut rng, &pool, words, 31);
            let article_tokens: Vec<String> = crate::text::word_tokens(&article);
            let target_len = headline_length(&mut rng);
            let headline = build_headline(&mut rng, &article_tokens, &novel_pool, target_len);
            records.push(NewsRecord {
                article,
                headline,
                category,
                aspect,
                sentiment,
            });
        }
    }
    records
}

/// Headline text used by the sentiment probe for each label.
pub fn probe_headline(sentiment: SentimentLabel) -> &'static str {
    match sentiment {
        SentimentLabel::Positive => "ভালো খবর এসেছে",
        SentimentLabel::Negative => "খারাপ খবর এসেছে",
        SentimentLabel::Neutral => "সাধারণ খবর এসেছে",
    }
}

/// Corpus where the headline is a deterministic function of the sentiment
/// label and articles are label-independent filler.
pub fn sentiment_probe_corpus(n: usize, seed: u64) -> Vec<NewsRecord> {
    let mut rng = Rng::new(seed ^ 0x70726f6265_u64);
    let filler = word_pool(&mut rng, 48);
    (0..n)
        .map(|i| {
            let sentiment = SentimentLabel::ALL[i % 3];
            let category = CategoryLabel::ALL[i % 5];
            let aspect = AspectLabel::ALL[i % 4];
            let words = 10 + rng.below(5);
            let article = (0..words)
                .map(|_| filler[rng.below(filler.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            NewsRecord {
                article,
                headline: probe_headline(sentiment).to_string(),
                category,
                aspect,
                sentiment,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_statistics, StatisticsOptions};

    #[test]
    fn replica_matches_reference_cross_tabs_exactly() {
        let records = replica_corpus(7);
        assert_eq!(records.len(), REPLICA_TOTAL);
        let stats = compute_statistics(&records, &StatisticsOptions::default()).unwrap();
        assert_eq!(stats.grand_total, 2520);
        assert_eq!(stats.category_total(CategoryLabel::Islam), 2001);
        assert_eq!(stats.category_total(CategoryLabel::Hinduism), 242);
        assert_eq!(stats.category_total(CategoryLabel::Christianity), 28);
        assert_eq!(stats.category_total(CategoryLabel::Buddhism), 29);
        assert_eq!(stats.category_total(CategoryLabel::Others), 220);
        assert_eq!(stats.aspect_total(AspectLabel::Report), 1204);
        assert_eq!(stats.aspect_total(AspectLabel::Festival), 161);
        assert_eq!(stats.aspect_total(AspectLabel::Education), 930);
        assert_eq!(stats.aspect_total(AspectLabel::Culture), 225);
        assert_eq!(stats.sentiment_total(SentimentLabel::Positive), 1717);
        assert_eq!(stats.sentiment_total(SentimentLabel::Negative), 455);
        assert_eq!(stats.sentiment_total(SentimentLabel::Neutral), 348);
        assert_eq!(
            stats.cross_aspect(CategoryLabel::Others, AspectLabel::Festival),
            1
        );
        assert_eq!(
            stats.cross_sentiment(CategoryLabel::Buddhism, SentimentLabel::Neutral),
            1
        );
    }

    #[test]
    fn replica_is_deterministic_per_seed() {
        let a = replica_corpus(3);
        let b = replica_corpus(3);
        assert_eq!(a, b);
        let c = replica_corpus(4);
        assert_ne!(a[0].article, c[0].article);
    }

    #[test]
    fn probe_headline_depends_only_on_sentiment() {
        let records = sentiment_probe_corpus(60, 1);
        assert_eq!(records.len(), 60);
        for r in &records {
            assert_eq!(r.headline, probe_headline(r.sentiment));
        }
        let positives = records
            .iter()
            .filter(|r| r.sentiment == SentimentLabel::Positive)
            .count();
        assert_eq!(positives, 20);
    }
}
