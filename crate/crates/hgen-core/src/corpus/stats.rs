//! Corpus statistics: label cross-tabulations, word/sentence averages,
//! vocabulary sizes, headline n-gram novelty, and length histograms.
//!
//! Aggregation uses integer sums throughout so results are independent of
//! record processing order.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AspectLabel, CategoryLabel, CorpusError, NewsRecord, SentimentLabel};
use crate::text;

/// How per-record novelty is combined into the corpus rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// One corpus-wide ratio of novel n-gram tokens to all n-gram tokens.
    #[default]
    Micro,
    /// Mean of per-record percentages (records shorter than n are skipped).
    Macro,
}

/// Whether repeated headline n-grams count once or per occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadlineCounting {
    #[default]
    Multiset,
    Distinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltyOptions {
    pub aggregation: Aggregation,
    pub counting: HeadlineCounting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsOptions {
    pub article_bin_width: usize,
    pub headline_bin_width: usize,
    pub novelty: NoveltyOptions,
}

impl Default for StatisticsOptions {
    fn default() -> Self {
        StatisticsOptions {
            article_bin_width: 100,
            headline_bin_width: 5,
            novelty: NoveltyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCount {
    pub category: String,
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatistics {
    pub grand_total: u64,
    pub category_totals: Vec<LabelCount>,
    pub aspect_totals: Vec<LabelCount>,
    pub sentiment_totals: Vec<LabelCount>,
    pub category_aspect: Vec<CrossCount>,
    pub category_sentiment: Vec<CrossCount>,
    pub avg_article_words: f64,
    pub avg_article_sentences: f64,
    pub article_vocab_size: u64,
    pub avg_headline_words: f64,
    pub avg_headline_sentences: f64,
    pub headline_vocab_size: u64,
    /// Index i holds the rate for (i+1)-grams, in percent.
    pub novel_ngram_rate: Vec<f64>,
    pub article_length_histogram: Vec<(u64, u64)>,
    pub headline_length_histogram: Vec<(u64, u64)>,
}

impl CorpusStatistics {
    pub fn category_total(&self, category: CategoryLabel) -> u64 {
        lookup(&self.category_totals, category.as_str())
    }

    pub fn aspect_total(&self, aspect: AspectLabel) -> u64 {
        lookup(&self.aspect_totals, aspect.as_str())
    }

    pub fn sentiment_total(&self, sentiment: SentimentLabel) -> u64 {
        lookup(&self.sentiment_totals, sentiment.as_str())
    }

    pub fn cross_aspect(&self, category: CategoryLabel, aspect: AspectLabel) -> u64 {
        cross_lookup(&self.category_aspect, category.as_str(), aspect.as_str())
    }

    pub fn cross_sentiment(&self, category: CategoryLabel, sentiment: SentimentLabel) -> u64 {
        cross_lookup(
            &self.category_sentiment,
            category.as_str(),
            sentiment.as_str(),
        )
    }

    /// Tab-separated report: cross-tab table, averages, novelty, histograms.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("Category");
        for aspect in AspectLabel::ALL {
            let _ = write!(out, "\t{aspect}");
        }
        for sentiment in SentimentLabel::ALL {
            let _ = write!(out, "\t{sentiment}");
        }
        out.push_str("\tTotal\n");
        for &category in CategoryLabel::ALL {
            let _ = write!(out, "{category}");
            for &aspect in AspectLabel::ALL {
                let _ = write!(out, "\t{}", self.cross_aspect(category, aspect));
            }
            for &sentiment in SentimentLabel::ALL {
                let _ = write!(out, "\t{}", self.cross_sentiment(category, sentiment));
            }
            let _ = writeln!(out, "\t{}", self.category_total(category));
        }
        out.push_str("Total");
        for &aspect in AspectLabel::ALL {
            let _ = write!(out, "\t{}", self.aspect_total(aspect));
        }
        for &sentiment in SentimentLabel::ALL {
            let _ = write!(out, "\t{}", self.sentiment_total(sentiment));
        }
        let _ = writeln!(out, "\t{}", self.grand_total);

        out.push('\n');
        out.push_str("Side\tAvg. words\tAvg. sentences\tVocabulary\n");
        let _ = writeln!(
            out,
            "Article\t{:.2}\t{:.2}\t{}",
            self.avg_article_words, self.avg_article_sentences, self.article_vocab_size
        );
        let _ = writeln!(
            out,
            "Headline\t{:.2}\t{:.2}\t{}",
            self.avg_headline_words, self.avg_headline_sentences, self.headline_vocab_size
        );

        out.push('\n');
        out.push_str("n\tNovel n-gram %\n");
        for (i, rate) in self.novel_ngram_rate.iter().enumerate() {
            let _ = writeln!(out, "{}\t{rate:.2}", i + 1);
        }

        for (name, histogram) in [
            ("Article length histogram (bin\tcount)", &self.article_length_histogram),
            ("Headline length histogram (bin\tcount)", &self.headline_length_histogram),
        ] {
            out.push('\n');
            let _ = writeln!(out, "{name}");
            for (bin, count) in histogram {
                let _ = writeln!(out, "{bin}\t{count}");
            }
        }
        out
    }
}

fn lookup(counts: &[LabelCount], label: &str) -> u64 {
    counts
        .iter()
        .find(|c| c.label == label)
        .map(|c| c.count)
        .unwrap_or(0)
}

fn cross_lookup(counts: &[CrossCount], category: &str, label: &str) -> u64 {
    counts
        .iter()
        .find(|c| c.category == category && c.label == label)
        .map(|c| c.count)
        .unwrap_or(0)
}

/// Compute the full statistics block with the default word tokenizer and
/// sentence segmenter.
pub fn compute_statistics(
    records: &[NewsRecord],
    options: &StatisticsOptions,
) -> Result<CorpusStatistics, CorpusError> {
    compute_statistics_with(records, options, text::word_tokens, text::sentence_count)
}

pub fn compute_statistics_with<T, S>(
    records: &[NewsRecord],
    options: &StatisticsOptions,
    tokenizer: T,
    segmenter: S,
) -> Result<CorpusStatistics, CorpusError>
where
    T: Fn(&str) -> Vec<String>,
    S: Fn(&str) -> usize,
{
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if options.article_bin_width < 1 || options.headline_bin_width < 1 {
        return Err(CorpusError::BadParameter(
            "histogram bin width must be at least 1".into(),
        ));
    }

    let mut category_counts: BTreeMap<CategoryLabel, u64> = BTreeMap::new();
    let mut aspect_counts: BTreeMap<AspectLabel, u64> = BTreeMap::new();
    let mut sentiment_counts: BTreeMap<SentimentLabel, u64> = BTreeMap::new();
    let mut cross_aspect: BTreeMap<(CategoryLabel, AspectLabel), u64> = BTreeMap::new();
    let mut cross_sentiment: BTreeMap<(CategoryLabel, SentimentLabel), u64> = BTreeMap::new();

    let mut article_words: u64 = 0;
    let mut article_sentences: u64 = 0;
    let mut headline_words: u64 = 0;
    let mut headline_sentences: u64 = 0;
    let mut article_vocab: HashSet<String> = HashSet::new();
    let mut headline_vocab: HashSet<String> = HashSet::new();
    let mut article_hist: BTreeMap<u64, u64> = BTreeMap::new();
    let mut headline_hist: BTreeMap<u64, u64> = BTreeMap::new();
    // novelty accumulators per n = 1..=4: (novel, total) or per-record sums
    let mut novelty = NoveltyAccumulator::new(4, options.novelty);

    for record in records {
        *category_counts.entry(record.category).or_insert(0) += 1;
        *aspect_counts.entry(record.aspect).or_insert(0) += 1;
        *sentiment_counts.entry(record.sentiment).or_insert(0) += 1;
        *cross_aspect
            .entry((record.category, record.aspect))
            .or_insert(0) += 1;
        *cross_sentiment
            .entry((record.category, record.sentiment))
            .or_insert(0) += 1;

        let art_tokens = tokenizer(&record.article);
        let head_tokens = tokenizer(&record.headline);
        article_words += art_tokens.len() as u64;
        headline_words += head_tokens.len() as u64;
        article_sentences += segmenter(&record.article) as u64;
        headline_sentences += segmenter(&record.headline) as u64;
        article_vocab.extend(art_tokens.iter().cloned());
        headline_vocab.extend(head_tokens.iter().cloned());
        *article_hist
            .entry(art_tokens.len() as u64 / options.article_bin_width as u64)
            .or_insert(0) += 1;
        *headline_hist
            .entry(head_tokens.len() as u64 / options.headline_bin_width as u64)
            .or_insert(0) += 1;
        novelty.add_record(&art_tokens, &head_tokens);
    }

    let n = records.len() as f64;
    Ok(CorpusStatistics {
        grand_total: records.len() as u64,
        category_totals: CategoryLabel::ALL
            .iter()
            .map(|&c| LabelCount {
                label: c.as_str().to_string(),
                count: category_counts.get(&c).copied().unwrap_or(0),
            })
            .collect(),
        aspect_totals: AspectLabel::ALL
            .iter()
            .map(|&a| LabelCount {
                label: a.as_str().to_string(),
                count: aspect_counts.get(&a).copied().unwrap_or(0),
            })
            .collect(),
        sentiment_totals: SentimentLabel::ALL
            .iter()
            .map(|&s| LabelCount {
                label: s.as_str().to_string(),
                count: sentiment_counts.get(&s).copied().unwrap_or(0),
            })
            .collect(),
        category_aspect: CategoryLabel::ALL
            .iter()
            .flat_map(|&c| {
                let cross_aspect = &cross_aspect;
                AspectLabel::ALL.iter().map(move |&a| CrossCount {
                    category: c.as_str().to_string(),
                    label: a.as_str().to_string(),
                    count: cross_aspect.get(&(c, a)).copied().unwrap_or(0),
                })
            })
            .collect(),
        category_sentiment: CategoryLabel::ALL
            .iter()
            .flat_map(|&c| {
                let cross_sentiment = &cross_sentiment;
                SentimentLabel::ALL.iter().map(move |&s| CrossCount {
                    category: c.as_str().to_string(),
                    label: s.as_str().to_string(),
                    count: cross_sentiment.get(&(c, s)).copied().unwrap_or(0),
                })
            })
            .collect(),
        avg_article_words: article_words as f64 / n,
        avg_article_sentences: article_sentences as f64 / n,
        article_vocab_size: article_vocab.len() as u64,
        avg_headline_words: headline_words as f64 / n,
        avg_headline_sentences: headline_sentences as f64 / n,
        headline_vocab_size: headline_vocab.len() as u64,
        novel_ngram_rate: (1..=4).map(|k| novelty.rate(k)).collect(),
        article_length_histogram: article_hist.into_iter().collect(),
        headline_length_histogram: headline_hist.into_iter().collect(),
    })
}

struct NoveltyAccumulator {
    options: NoveltyOptions,
    novel: Vec<u64>,
    total: Vec<u64>,
    // macro mode: sum of per-record rates and number of contributing records
    rate_sum: Vec<f64>,
    contributing: Vec<u64>,
}

impl NoveltyAccumulator {
    fn new(max_n: usize, options: NoveltyOptions) -> Self {
        NoveltyAccumulator {
            options,
            novel: vec![0; max_n],
            total: vec![0; max_n],
            rate_sum: vec![0.0; max_n],
            contributing: vec![0; max_n],
        }
    }

    fn add_record(&mut self, article: &[String], headline: &[String]) {
        for n in 1..=self.novel.len() {
            let (novel, total) = record_novelty(article, headline, n, self.options.counting);
            self.novel[n - 1] += novel;
            self.total[n - 1] += total;
            if total > 0 {
                self.rate_sum[n - 1] += novel as f64 / total as f64 * 100.0;
                self.contributing[n - 1] += 1;
            }
        }
    }

    fn rate(&self, n: usize) -> f64 {
        match self.options.aggregation {
            Aggregation::Micro => {
                if self.total[n - 1] == 0 {
                    0.0
                } else {
                    self.novel[n - 1] as f64 / self.total[n - 1] as f64 * 100.0
                }
            }
            Aggregation::Macro => {
                if self.contributing[n - 1] == 0 {
                    0.0
                } else {
                    self.rate_sum[n - 1] / self.contributing[n - 1] as f64
                }
            }
        }
    }
}

fn record_novelty(
    article: &[String],
    headline: &[String],
    n: usize,
    counting: HeadlineCounting,
) -> (u64, u64) {
    if headline.len() < n {
        return (0, 0);
    }
    let article_grams: HashSet<&[String]> = text::ngrams(article, n).collect();
    match counting {
        HeadlineCounting::Multiset => {
            let mut novel = 0u64;
            let mut total = 0u64;
            for gram in text::ngrams(headline, n) {
                total += 1;
                if !article_grams.contains(gram) {
                    novel += 1;
                }
            }
            (novel, total)
        }
        HeadlineCounting::Distinct => {
            let distinct: HashSet<&[String]> = text::ngrams(headline, n).collect();
            let novel = distinct
                .iter()
                .filter(|g| !article_grams.contains(**g))
                .count() as u64;
            (novel, distinct.len() as u64)
        }
    }
}

/// Corpus-level novelty for a single n with default tokenizer and options:
/// the percentage of headline n-gram tokens absent from the paired article.
pub fn novel_ngram_rate(records: &[NewsRecord], n: usize) -> Result<f64, CorpusError> {
    novel_ngram_rate_with(records, n, text::word_tokens, NoveltyOptions::default())
}

pub fn novel_ngram_rate_with<T>(
    records: &[NewsRecord],
    n: usize,
    tokenizer: T,
    options: NoveltyOptions,
) -> Result<f64, CorpusError>
where
    T: Fn(&str) -> Vec<String>,
{
    if n < 1 {
        return Err(CorpusError::BadParameter(
            "n-gram order must be at least 1".into(),
        ));
    }
    let mut acc = NoveltyAccumulator::new(n, options);
    for record in records {
        let article = tokenizer(&record.article);
        let headline = tokenizer(&record.headline);
        let (novel, total) = record_novelty(&article, &headline, n, options.counting);
        acc.novel[n - 1] += novel;
        acc.total[n - 1] += total;
        if total > 0 {
            acc.rate_sum[n - 1] += novel as f64 / total as f64 * 100.0;
            acc.contributing[n - 1] += 1;
        }
    }
    Ok(acc.rate(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Article,
    Headline,
}

impl std::str::FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "article" => Ok(Field::Article),
            "headline" => Ok(Field::Headline),
            other => Err(format!("unknown field {other:?}")),
        }
    }
}

/// Word-length histogram over one field: bin index -> record count, bins with
/// zero count omitted. Counts always sum to the number of records.
pub fn length_histogram(
    records: &[NewsRecord],
    field: Field,
    bin_width: usize,
) -> Result<Vec<(u64, u64)>, CorpusError> {
    if bin_width < 1 {
        return Err(CorpusError::BadParameter(
            "histogram bin width must be at least 1".into(),
        ));
    }
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for record in records {
        let text = match field {
            Field::Article => &record.article,
            Field::Headline => &record.headline,
        };
        let words = text::word_count(text) as u64;
        *hist.entry(words / bin_width as u64).or_insert(0) += 1;
    }
    Ok(hist.into_iter().collect())
}

/// Histogram serialized as `bin,count` CSV lines with a header.
pub fn histogram_csv(histogram: &[(u64, u64)]) -> String {
    let mut out = String::from("bin,count\n");
    for (bin, count) in histogram {
        let _ = writeln!(out, "{bin},{count}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AspectLabel, CategoryLabel, NewsRecord, SentimentLabel};

    fn record(
        article: &str,
        headline: &str,
        category: CategoryLabel,
        aspect: AspectLabel,
        sentiment: SentimentLabel,
    ) -> NewsRecord {
        NewsRecord {
            article: article.into(),
            headline: headline.into(),
            category,
            aspect,
            sentiment,
        }
    }

    #[test]
    fn average_words_matches_hand_count() {
        // hand-counted: 5 words and 7 words
        let records = vec![
            record(
                "এক দুই তিন চার পাঁচ",
                "শিরোনাম এক",
                CategoryLabel::Islam,
                AspectLabel::Report,
                SentimentLabel::Positive,
            ),
            record(
                "এক দুই তিন চার পাঁচ ছয় সাত",
                "শিরোনাম দুই",
                CategoryLabel::Hinduism,
                AspectLabel::Festival,
                SentimentLabel::Negative,
            ),
        ];
        let stats = compute_statistics(&records, &StatisticsOptions::default()).unwrap();
        assert_eq!(stats.avg_article_words, 6.0);
        assert_eq!(stats.avg_headline_words, 2.0);
        assert_eq!(stats.grand_total, 2);
    }

    #[test]
    fn cross_tab_conserves_totals() {
        let mut records = Vec::new();
        for i in 0..60 {
            records.push(record(
                "word word word",
                "headline",
                CategoryLabel::ALL[i % 5],
                AspectLabel::ALL[i % 4],
                SentimentLabel::ALL[i % 3],
            ));
        }
        let stats = compute_statistics(&records, &StatisticsOptions::default()).unwrap();
        let cat_sum: u64 = stats.category_totals.iter().map(|c| c.count).sum();
        let aspect_sum: u64 = stats.aspect_totals.iter().map(|c| c.count).sum();
        let sentiment_sum: u64 = stats.sentiment_totals.iter().map(|c| c.count).sum();
        assert_eq!(cat_sum, stats.grand_total);
        assert_eq!(aspect_sum, stats.grand_total);
        assert_eq!(sentiment_sum, stats.grand_total);
        let cross_sum: u64 = stats.category_aspect.iter().map(|c| c.count).sum();
        assert_eq!(cross_sum, stats.grand_total);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            compute_statistics(&[], &StatisticsOptions::default()),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn novelty_brute_force_oracle_single_record() {
        // headline [a, b] vs article [a, c]: b is novel -> 50%
        let records = vec![record(
            "a c",
            "a b",
            CategoryLabel::Islam,
            AspectLabel::Report,
            SentimentLabel::Neutral,
        )];
        assert_eq!(novel_ngram_rate(&records, 1).unwrap(), 50.0);
    }

    #[test]
    fn novelty_zero_when_headline_is_contiguous_in_article() {
        let records = vec![record(
            "x y z w q",
            "y z w",
            CategoryLabel::Islam,
            AspectLabel::Report,
            SentimentLabel::Neutral,
        )];
        for n in 1..=3 {
            assert_eq!(novel_ngram_rate(&records, n).unwrap(), 0.0, "n={n}");
        }
    }

    #[test]
    fn novelty_hundred_when_disjoint() {
        let records = vec![record(
            "p q r",
            "x y",
            CategoryLabel::Islam,
            AspectLabel::Report,
            SentimentLabel::Neutral,
        )];
        assert_eq!(novel_ngram_rate(&records, 1).unwrap(), 100.0);
        assert_eq!(novel_ngram_rate(&records, 2).unwrap(), 100.0);
    }

    #[test]
    fn novelty_short_headline_contributes_nothing() {
        let records = vec![
            record(
                "a b c",
                "a",
                CategoryLabel::Islam,
                AspectLabel::Report,
                SentimentLabel::Neutral,
            ),
            record(
                "a b",
                "a b",
                CategoryLabel::Islam,
                AspectLabel::Report,
                SentimentLabel::Neutral,
            ),
        ];
        // first record has no bigrams: only the second one counts
        assert_eq!(novel_ngram_rate(&records, 2).unwrap(), 0.0);
    }

    #[test]
    fn novelty_rejects_zero_n() {
        assert!(novel_ngram_rate(&[], 0).is_err());
    }

    #[test]
    fn histogram_manual_binning_oracle() {
        let records = vec![
            record("a b c", "h", CategoryLabel::Islam, AspectLabel::Report, SentimentLabel::Neutral),
            record("a b c d e", "h", CategoryLabel::Islam, AspectLabel::Report, SentimentLabel::Neutral),
            record(
                "a b c d e f g h i j k l",
                "h",
                CategoryLabel::Islam,
                AspectLabel::Report,
                SentimentLabel::Neutral,
            ),
        ];
        let hist = length_histogram(&records, Field::Article, 10).unwrap();
        assert_eq!(hist, vec![(0, 2), (1, 1)]);
        assert!(length_histogram(&records, Field::Article, 0).is_err());
        assert!(length_histogram(&[], Field::Article, 10).unwrap().is_empty());
    }

    #[test]
    fn histogram_bin_width_one_conserves_counts() {
        let records: Vec<NewsRecord> = (1..=9)
            .map(|k| {
                record(
                    &vec!["w"; k].join(" "),
                    "h",
                    CategoryLabel::Islam,
                    AspectLabel::Report,
                    SentimentLabel::Neutral,
                )
            })
            .collect();
        let hist = length_histogram(&records, Field::Article, 1).unwrap();
        let total: u64 = hist.iter().map(|(_, c)| c).sum();
        assert_eq!(total as usize, records.len());
    }

    #[test]
    fn tsv_report_contains_all_sections() {
        let records = vec![record(
            "a b c। d e",
            "a b",
            CategoryLabel::Islam,
            AspectLabel::Report,
            SentimentLabel::Positive,
        )];
        let stats = compute_statistics(&records, &StatisticsOptions::default()).unwrap();
        let tsv = stats.to_tsv();
        assert!(tsv.contains("Category\tReport"));
        assert!(tsv.contains("Avg. words"));
        assert!(tsv.contains("Novel n-gram %"));
        assert!(tsv.contains("Article length histogram"));
    }

    #[test]
    fn distinct_counting_dedupes_headline_ngrams() {
        // headline [a, a, b] vs article [a]: multiset unigram novelty 1/3,
        // distinct novelty 1/2
        let records = vec![record(
            "a",
            "a a b",
            CategoryLabel::Islam,
            AspectLabel::Report,
            SentimentLabel::Neutral,
        )];
        let micro = novel_ngram_rate(&records, 1).unwrap();
        assert!((micro - 100.0 / 3.0).abs() < 1e-12);
        let distinct = novel_ngram_rate_with(
            &records,
            1,
            crate::text::word_tokens,
            NoveltyOptions {
                aggregation: Aggregation::Micro,
                counting: HeadlineCounting::Distinct,
            },
        )
        .unwrap();
        assert_eq!(distinct, 50.0);
    }

    #[test]
    fn macro_aggregation_averages_per_record_rates() {
        let records = vec![
            record("a", "a b", CategoryLabel::Islam, AspectLabel::Report, SentimentLabel::Neutral),
            record("x", "y", CategoryLabel::Islam, AspectLabel::Report, SentimentLabel::Neutral),
        ];
        // per-record rates: 50% and 100% -> macro 75%; micro = 2 novel of 3
        let macro_rate = novel_ngram_rate_with(
            &records,
            1,
            crate::text::word_tokens,
            NoveltyOptions {
                aggregation: Aggregation::Macro,
                counting: HeadlineCounting::Multiset,
            },
        )
        .unwrap();
        assert_eq!(macro_rate, 75.0);
        let micro_rate = novel_ngram_rate(&records, 1).unwrap();
        assert!((micro_rate - 200.0 / 3.0).abs() < 1e-12);
    }
}
