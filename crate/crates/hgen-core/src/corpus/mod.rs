//! Annotated news corpus: loading, validation, splitting, statistics.

mod stats;

pub use stats::{
    compute_statistics, compute_statistics_with, histogram_csv, length_histogram,
    novel_ngram_rate, novel_ngram_rate_with, Aggregation, CorpusStatistics, CrossCount, Field,
    HeadlineCounting, LabelCount, NoveltyOptions, StatisticsOptions,
};

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: invalid UTF-8")]
    Decode { line: usize },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: unexpected field `{field}`")]
    UnexpectedField { line: usize, field: String },
    #[error("line {line}: field `{field}` must be a string")]
    NotAString { line: usize, field: &'static str },
    #[error("line {line}: {field} label {value:?} is not in the taxonomy")]
    UnknownLabel {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: field `{field}` is blank")]
    BlankField { line: usize, field: &'static str },
    #[error("line {line}: malformed row: {message}")]
    Malformed { line: usize, message: String },
    #[error("split counts sum to {requested} but the corpus has {available} records")]
    SplitSizeMismatch { requested: usize, available: usize },
    #[error("operation requires a non-empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    BadParameter(String),
}

macro_rules! label_enum {
    ($name:ident, $field:literal, [$(($variant:ident, $text:literal)),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            /// Case-insensitive match on the canonical label with surrounding
            /// whitespace stripped.
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let cleaned = s.trim();
                $(
                    if cleaned.eq_ignore_ascii_case($text) {
                        return Ok($name::$variant);
                    }
                )+
                Err(s.to_string())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(|_| {
                    serde::de::Error::custom(format!(
                        concat!($field, " label {:?} is not in the taxonomy"),
                        raw
                    ))
                })
            }
        }
    };
}

label_enum!(
    CategoryLabel,
    "category",
    [
        (Islam, "Islam"),
        (Hinduism, "Hinduism"),
        (Christianity, "Christianity"),
        (Buddhism, "Buddhism"),
        (Others, "Others"),
    ]
);

label_enum!(
    AspectLabel,
    "aspect",
    [
        (Report, "Report"),
        (Festival, "Festival"),
        (Education, "Education"),
        (Culture, "Culture"),
    ]
);

label_enum!(
    SentimentLabel,
    "sentiment",
    [
        (Positive, "Positive"),
        (Negative, "Negative"),
        (Neutral, "Neutral"),
    ]
);

/// One annotated article. Field order matters: serialization emits the keys
/// in exactly this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub article: String,
    pub headline: String,
    pub category: CategoryLabel,
    pub aspect: AspectLabel,
    pub sentiment: SentimentLabel,
}

pub const FIELD_NAMES: [&str; 5] = ["article", "headline", "category", "aspect", "sentiment"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Load and validate records in file order. Labels are canonicalized; rows
/// with missing fields, unknown labels, blank text, or bad encoding fail with
/// the offending line number.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<NewsRecord>, CorpusError> {
    match format {
        CorpusFormat::Jsonl => load_jsonl(path),
        CorpusFormat::Csv => load_csv(path),
    }
}

fn record_from_parts(
    line: usize,
    take: impl Fn(&'static str) -> Option<Result<String, CorpusError>>,
) -> Result<NewsRecord, CorpusError> {
    let field = |name: &'static str| -> Result<String, CorpusError> {
        take(name).ok_or(CorpusError::MissingField { line, field: name })?
    };
    let article = field("article")?;
    let headline = field("headline")?;
    let category_raw = field("category")?;
    let aspect_raw = field("aspect")?;
    let sentiment_raw = field("sentiment")?;

    for (name, value) in [("article", &article), ("headline", &headline)] {
        if value.trim().is_empty() {
            return Err(CorpusError::BlankField { line, field: name });
        }
    }
    let category = category_raw
        .parse()
        .map_err(|value| CorpusError::UnknownLabel {
            line,
            field: "category",
            value,
        })?;
    let aspect = aspect_raw
        .parse()
        .map_err(|value| CorpusError::UnknownLabel {
            line,
            field: "aspect",
            value,
        })?;
    let sentiment = sentiment_raw
        .parse()
        .map_err(|value| CorpusError::UnknownLabel {
            line,
            field: "sentiment",
            value,
        })?;
    Ok(NewsRecord {
        article,
        headline,
        category,
        aspect,
        sentiment,
    })
}

fn load_jsonl(path: &Path) -> Result<Vec<NewsRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let bytes = line.map_err(|e| io_err(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| CorpusError::Decode { line: line_no })?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::Malformed {
            line: line_no,
            message: "row is not a JSON object".into(),
        })?;
        for key in obj.keys() {
            if !FIELD_NAMES.contains(&key.as_str()) {
                return Err(CorpusError::UnexpectedField {
                    line: line_no,
                    field: key.clone(),
                });
            }
        }
        let record = record_from_parts(line_no, |name| {
            obj.get(name).map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or(CorpusError::NotAString {
                        line: line_no,
                        field: name,
                    })
            })
        })?;
        records.push(record);
    }
    Ok(records)
}

fn load_csv(path: &Path) -> Result<Vec<NewsRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    for name in headers.iter() {
        if !FIELD_NAMES.contains(&name) {
            return Err(CorpusError::UnexpectedField {
                line: 1,
                field: name.to_string(),
            });
        }
    }
    let column = |name: &'static str| headers.iter().position(|h| h == name);

    let mut records = Vec::new();
    for result in reader.records() {
        let row = result.map_err(|e| match e.kind() {
            csv::ErrorKind::Utf8 { .. } => CorpusError::Decode {
                line: e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or_default(),
            },
            _ => CorpusError::Malformed {
                line: e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or_default(),
                message: e.to_string(),
            },
        })?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let record = record_from_parts(line, |name| {
            column(name)
                .and_then(|i| row.get(i))
                .map(|v| Ok(v.to_string()))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize to one compact JSON object per line, keys in canonical order.
pub fn write_jsonl(path: &Path, records: &[NewsRecord]) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    );
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization cannot fail");
        writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Serialize to RFC 4180 CSV with the canonical header row.
pub fn write_csv(path: &Path, records: &[NewsRecord]) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(FIELD_NAMES)
        .map_err(|e| CorpusError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
    for record in records {
        writer
            .write_record([
                record.article.as_str(),
                record.headline.as_str(),
                record.category.as_str(),
                record.aspect.as_str(),
                record.sentiment.as_str(),
            ])
            .map_err(|e| CorpusError::Malformed {
                line: 0,
                message: e.to_string(),
            })?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Disjoint, exhaustive record-id partition produced by a seeded shuffle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffle record ids deterministically by `seed`, then partition into
/// train/validation/test by the requested counts (which must sum to the
/// record total).
pub fn split_corpus(
    records: &[NewsRecord],
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let (n_train, n_val, n_test) = counts;
    let requested = n_train + n_val + n_test;
    if requested != records.len() {
        return Err(CorpusError::SplitSizeMismatch {
            requested,
            available: records.len(),
        });
    }
    let mut ids: Vec<usize> = (0..records.len()).collect();
    Rng::new(seed).shuffle(&mut ids);
    let test = ids.split_off(n_train + n_val);
    let mut train = ids;
    let validation = train.split_off(n_train);
    Ok(CorpusSplit {
        train,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_record(article: &str, headline: &str) -> NewsRecord {
        NewsRecord {
            article: article.to_string(),
            headline: headline.to_string(),
            category: CategoryLabel::Islam,
            aspect: AspectLabel::Report,
            sentiment: SentimentLabel::Positive,
        }
    }

    #[test]
    fn label_parsing_is_case_insensitive_and_trimmed() {
        assert_eq!(" islam ".parse::<CategoryLabel>(), Ok(CategoryLabel::Islam));
        assert_eq!("FESTIVAL".parse::<AspectLabel>(), Ok(AspectLabel::Festival));
        assert_eq!("neutral".parse::<SentimentLabel>(), Ok(SentimentLabel::Neutral));
        assert!("Judaism".parse::<CategoryLabel>().is_err());
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical_for_canonical_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let records = vec![
            sample_record("প্রথম নিবন্ধ", "প্রথম শিরোনাম"),
            NewsRecord {
                article: "দ্বিতীয় নিবন্ধ".into(),
                headline: "দ্বিতীয় শিরোনাম".into(),
                category: CategoryLabel::Hinduism,
                aspect: AspectLabel::Culture,
                sentiment: SentimentLabel::Negative,
            },
        ];
        write_jsonl(&path, &records).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(loaded, records);
        write_jsonl(&path, &loaded).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn jsonl_canonicalizes_label_case() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"article\":\"a\",\"headline\":\"h\",\"category\":\"islam\",\"aspect\":\"report\",\"sentiment\":\"POSITIVE\"}\n",
        )
        .unwrap();
        let loaded = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(loaded[0].category, CategoryLabel::Islam);
        assert_eq!(loaded[0].sentiment, SentimentLabel::Positive);
    }

    #[test]
    fn missing_field_names_row_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"article\":\"a\",\"headline\":\"h\",\"category\":\"Islam\",\"aspect\":\"Report\",\"sentiment\":\"Positive\"}\n{\"article\":\"a\",\"headline\":\"h\",\"category\":\"Islam\",\"aspect\":\"Report\"}\n",
        )
        .unwrap();
        let err = load_corpus(&path, CorpusFormat::Jsonl).unwrap_err();
        match err {
            CorpusError::MissingField { line, field } => {
                assert_eq!(line, 2);
                assert_eq!(field, "sentiment");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"article\":\"a\",\"headline\":\"h\",\"category\":\"Judaism\",\"aspect\":\"Report\",\"sentiment\":\"Positive\"}\n",
        )
        .unwrap();
        let err = load_corpus(&path, CorpusFormat::Jsonl).unwrap_err();
        match err {
            CorpusError::UnknownLabel { line, field, value } => {
                assert_eq!((line, field, value.as_str()), (1, "category", "Judaism"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_utf8_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, [0xff, 0xfe, b'\n']).unwrap();
        let err = load_corpus(&path, CorpusFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::Decode { line: 1 }));
    }

    #[test]
    fn csv_round_trip_with_embedded_quotes_and_newlines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        let records = vec![sample_record("line one\nline \"two\"", "h, with comma")];
        write_csv(&path, &records).unwrap();
        let loaded = load_corpus(&path, CorpusFormat::Csv).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn split_matches_requested_counts_exactly() {
        let records: Vec<NewsRecord> = (0..2520)
            .map(|i| sample_record(&format!("article {i}"), &format!("headline {i}")))
            .collect();
        let split = split_corpus(&records, (1870, 150, 500), 11).unwrap();
        assert_eq!(split.train.len(), 1870);
        assert_eq!(split.validation.len(), 150);
        assert_eq!(split.test.len(), 500);
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..2520).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let records: Vec<NewsRecord> = (0..50)
            .map(|i| sample_record(&format!("a{i}"), &format!("h{i}")))
            .collect();
        let a = split_corpus(&records, (30, 10, 10), 7).unwrap();
        let b = split_corpus(&records, (30, 10, 10), 7).unwrap();
        assert_eq!(a, b);
        let c = split_corpus(&records, (30, 10, 10), 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_size_mismatch_is_an_error() {
        let records: Vec<NewsRecord> = (0..2520)
            .map(|i| sample_record(&format!("a{i}"), &format!("h{i}")))
            .collect();
        let err = split_corpus(&records, (2000, 150, 500), 1).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::SplitSizeMismatch {
                requested: 2650,
                available: 2520
            }
        ));
    }
}
