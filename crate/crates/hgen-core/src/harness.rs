//! Configuration-driven experiment orchestration: run baseline and fused
//! experiments end to end, persist inspectable run records, and build
//! baseline-vs-proposed comparison tables.
//!
//! A run directory contains `config.json`, `samples.jsonl`, `metrics.json`,
//! and `loss.csv`. Runs are deterministic given the seeds in the config, so
//! two runs of the same config produce byte-identical `metrics.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_corpus, split_corpus, AspectLabel, CategoryLabel, CorpusFormat, NewsRecord,
    SentimentLabel,
};
use crate::fusion::{build_baseline_input, build_multigen_input, FusionConfig, FusionInput};
use crate::metrics::{
    evaluate_corpus, EmbeddingProvider, FlatMetricReport, HashEmbedder, MetricReport, PpmiEmbedder,
};
use crate::model::{generate, init_model, train, DecodeConfig, ModelConfig, TrainingConfig};
use crate::preprocess::{
    detokenize_clean, normalize_text, tokenize, truncate, TokenSequence, Vocabulary, EOS_ID,
};
use crate::text;

/// Which input construction an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Multigen,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "multigen" => Ok(Mode::Multigen),
            other => Err(format!("unknown mode {other:?} (expected baseline or multigen)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Multigen => "multigen",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSettings {
    pub max_size: usize,
    pub min_frequency: usize,
}

impl Default for VocabSettings {
    fn default() -> Self {
        VocabSettings {
            max_size: 8192,
            min_frequency: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Ppmi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub embedder: EmbedderKind,
    pub embed_dim: usize,
    pub embed_seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            embedder: EmbedderKind::Hash,
            embed_dim: 64,
            embed_seed: 0,
        }
    }
}

/// Full experiment description; the `config.json` schema. Unknown keys are
/// rejected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_path: String,
    #[serde(default = "default_format")]
    pub corpus_format: String,
    pub split: SplitSettings,
    #[serde(default)]
    pub vocab: VocabSettings,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub metrics: MetricSettings,
    /// Permit training values outside the default hyperparameter space.
    #[serde(default)]
    pub allow_custom_hparams: bool,
    pub output_dir: String,
}

fn default_format() -> String {
    "jsonl".to_string()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("stage config: reading {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&raw).context("stage config: parsing")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        CorpusFormat::from_str(&self.corpus_format)
            .map_err(|e| anyhow!("stage config: {e}"))?;
        if !self.allow_custom_hparams && !self.training.in_search_space() {
            bail!(
                "stage config: training values outside the default search space \
                 (set allow_custom_hparams to override)"
            );
        }
        self.fusion
            .validate()
            .map_err(|e| anyhow!("stage config: {e}"))?;
        Ok(())
    }

    fn format(&self) -> CorpusFormat {
        CorpusFormat::from_str(&self.corpus_format).expect("validated")
    }
}

/// One generated test sample as persisted in `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub input_rendered: String,
    pub reference: String,
    pub generated: String,
}

/// A persisted experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub timestamp: u64,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub samples: Vec<SampleRecord>,
    pub metrics: MetricReport,
    pub loss_trajectory: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigEnvelope {
    run_id: String,
    timestamp: u64,
    mode: Mode,
    config: ExperimentConfig,
}

fn label_vocabulary_text() -> String {
    let mut words: Vec<&str> = Vec::new();
    words.extend(CategoryLabel::ALL.iter().map(|l| l.as_str()));
    words.extend(AspectLabel::ALL.iter().map(|l| l.as_str()));
    words.extend(SentimentLabel::ALL.iter().map(|l| l.as_str()));
    words.join(" ")
}

/// Normalized training-split texts plus the task prefix and the label words,
/// the corpus the vocabulary (and the PPMI embedder) is built from.
fn vocabulary_texts(
    config: &ExperimentConfig,
    records: &[NewsRecord],
    train_ids: &[usize],
) -> Vec<String> {
    let mut texts: Vec<String> = Vec::with_capacity(train_ids.len() * 2 + 2);
    for &id in train_ids {
        let r = &records[id];
        texts.push(normalize_text(&r.article, &config.fusion.normalization));
        texts.push(normalize_text(&r.headline, &config.fusion.normalization));
    }
    if !config.fusion.task_prefix.is_empty() {
        texts.push(config.fusion.task_prefix.clone());
    }
    texts.push(label_vocabulary_text());
    texts
}

/// The vocabulary an experiment over `train_ids` uses. Shared by `run`,
/// `preprocess`, and checkpoint-based generation so they agree exactly.
pub fn training_vocabulary(
    config: &ExperimentConfig,
    records: &[NewsRecord],
    train_ids: &[usize],
) -> Result<Vocabulary> {
    let texts = vocabulary_texts(config, records, train_ids);
    Vocabulary::build(&texts, config.vocab.max_size, config.vocab.min_frequency)
        .context("stage vocabulary")
}

fn build_input(
    record: &NewsRecord,
    vocab: &Vocabulary,
    config: &ExperimentConfig,
    mode: Mode,
) -> Result<FusionInput> {
    let max_len = config
        .training
        .input_token_length
        .min(config.model.max_positions);
    let input = match mode {
        Mode::Baseline => build_baseline_input(record, vocab, &config.fusion, max_len),
        Mode::Multigen => build_multigen_input(record, vocab, &config.fusion, max_len),
    }?;
    Ok(input)
}

fn build_target(
    record: &NewsRecord,
    vocab: &Vocabulary,
    config: &ExperimentConfig,
) -> Result<TokenSequence> {
    let normalized = normalize_text(&record.headline, &config.fusion.normalization);
    if normalized.is_empty() {
        bail!("headline is empty after normalization");
    }
    let tokens = tokenize(&normalized, vocab);
    let mut cut = truncate(&tokens, config.training.target_token_length.saturating_sub(1).max(1))?;
    cut.ids.push(EOS_ID);
    Ok(cut)
}

fn make_embedder(
    settings: &MetricSettings,
    train_texts: &[String],
) -> Box<dyn EmbeddingProvider> {
    match settings.embedder {
        EmbedderKind::Hash => Box::new(HashEmbedder::new(settings.embed_dim, settings.embed_seed)),
        EmbedderKind::Ppmi => Box::new(PpmiEmbedder::train(
            train_texts,
            settings.embed_dim,
            4,
            20_000,
            settings.embed_seed,
        )),
    }
}

/// Execute load -> split -> vocabulary -> inputs -> train -> generate ->
/// evaluate, then persist the run under the configured output directory.
pub fn run_experiment(config: &ExperimentConfig, mode: Mode) -> Result<RunRecord> {
    config.validate()?;
    let records = load_corpus(Path::new(&config.corpus_path), config.format())
        .context("stage load")?;

    let split = split_corpus(
        &records,
        (config.split.train, config.split.validation, config.split.test),
        config.split.seed,
    )
    .context("stage split")?;

    let vocab_texts = vocabulary_texts(config, &records, &split.train);
    let vocab = Vocabulary::build(&vocab_texts, config.vocab.max_size, config.vocab.min_frequency)
        .context("stage vocabulary")?;

    let mut pairs: Vec<(FusionInput, TokenSequence)> = Vec::with_capacity(split.train.len());
    for &id in &split.train {
        let record = &records[id];
        let input = build_input(record, &vocab, config, mode)
            .with_context(|| format!("stage inputs: record {id}"))?;
        let target = build_target(record, &vocab, config)
            .with_context(|| format!("stage inputs: record {id}"))?;
        pairs.push((input, target));
    }

    let mut model_config = config.model;
    model_config.vocab_size = vocab.len();
    let mut params = init_model(&model_config).context("stage train")?;
    let loss_trajectory = train(&mut params, &pairs, &config.training).context("stage train")?;

    let mut samples = Vec::with_capacity(split.test.len());
    for &id in &split.test {
        let record = &records[id];
        let input = build_input(record, &vocab, config, mode)
            .with_context(|| format!("stage generate: record {id}"))?;
        let output = generate(&params, &input, &config.decode)
            .with_context(|| format!("stage generate: record {id}"))?;
        let generated = detokenize_clean(&output, &vocab).context("stage generate")?;
        samples.push(SampleRecord {
            id,
            input_rendered: input.render(&vocab),
            reference: record.headline.clone(),
            generated,
        });
    }

    let generated: Vec<String> = samples.iter().map(|s| s.generated.clone()).collect();
    let references: Vec<String> = samples.iter().map(|s| s.reference.clone()).collect();
    let embedder = make_embedder(&config.metrics, &vocab_texts);
    let metrics =
        evaluate_corpus(&generated, &references, embedder.as_ref()).context("stage evaluate")?;

    let run = RunRecord {
        run_id: String::new(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        mode,
        config: config.clone(),
        samples,
        metrics,
        loss_trajectory,
    };
    persist_run(run)
}

fn next_run_id(output_dir: &Path, mode: Mode) -> Result<String> {
    let mut max_index = 0u32;
    if output_dir.exists() {
        for entry in std::fs::read_dir(output_dir).context("stage persist")? {
            let name = entry.context("stage persist")?.file_name();
            let name = name.to_string_lossy();
            if let Some(rest) = name.strip_prefix("run-") {
                if let Some(num) = rest.split('-').next() {
                    if let Ok(n) = num.parse::<u32>() {
                        max_index = max_index.max(n);
                    }
                }
            }
        }
    }
    Ok(format!("run-{:04}-{mode}", max_index + 1))
}

fn persist_run(mut run: RunRecord) -> Result<RunRecord> {
    let output_dir = PathBuf::from(&run.config.output_dir);
    std::fs::create_dir_all(&output_dir)
        .with_context(|| format!("stage persist: creating {}", output_dir.display()))?;
    run.run_id = next_run_id(&output_dir, run.mode)?;
    let dir = output_dir.join(&run.run_id);
    std::fs::create_dir(&dir)
        .with_context(|| format!("stage persist: creating {}", dir.display()))?;

    let envelope = ConfigEnvelope {
        run_id: run.run_id.clone(),
        timestamp: run.timestamp,
        mode: run.mode,
        config: run.config.clone(),
    };
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&envelope).expect("config serialization"),
    )
    .context("stage persist: config.json")?;

    let mut samples_file = std::io::BufWriter::new(
        std::fs::File::create(dir.join("samples.jsonl")).context("stage persist: samples.jsonl")?,
    );
    for sample in &run.samples {
        let line = serde_json::to_string(sample).expect("sample serialization");
        writeln!(samples_file, "{line}").context("stage persist: samples.jsonl")?;
    }
    samples_file.flush().context("stage persist: samples.jsonl")?;

    std::fs::write(
        dir.join("metrics.json"),
        run.metrics.to_flat().to_json_pretty(),
    )
    .context("stage persist: metrics.json")?;

    let mut loss_csv = String::from("epoch,loss\n");
    for (i, loss) in run.loss_trajectory.iter().enumerate() {
        loss_csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(dir.join("loss.csv"), loss_csv).context("stage persist: loss.csv")?;
    Ok(run)
}

/// Load a persisted run directory back into a `RunRecord`.
pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let envelope: ConfigEnvelope = serde_json::from_str(
        &std::fs::read_to_string(dir.join("config.json"))
            .with_context(|| format!("reading {}", dir.join("config.json").display()))?,
    )
    .context("parsing config.json")?;
    let flat: FlatMetricReport = serde_json::from_str(
        &std::fs::read_to_string(dir.join("metrics.json")).context("reading metrics.json")?,
    )
    .context("parsing metrics.json")?;
    let samples = std::fs::read_to_string(dir.join("samples.jsonl"))
        .context("reading samples.jsonl")?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<SampleRecord>, _>>()
        .context("parsing samples.jsonl")?;
    let loss_trajectory = std::fs::read_to_string(dir.join("loss.csv"))
        .context("reading loss.csv")?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .ok_or_else(|| anyhow!("malformed loss.csv line {l:?}"))?
                .parse::<f64>()
                .map_err(|e| anyhow!("malformed loss.csv line {l:?}: {e}"))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RunRecord {
        run_id: envelope.run_id,
        timestamp: envelope.timestamp,
        mode: envelope.mode,
        config: envelope.config,
        metrics: reconstruct_report(&flat),
        samples,
        loss_trajectory,
    })
}

/// The flat form stores ROUGE as F1 only; reconstruct a report that carries
/// those values in the F1 slots (precision/recall are not persisted).
fn reconstruct_report(flat: &FlatMetricReport) -> MetricReport {
    use crate::metrics::PRF;
    let prf = |f1: f64| PRF {
        precision: f64::NAN,
        recall: f64::NAN,
        f1,
    };
    MetricReport {
        bleu: flat.bleu,
        rouge1: prf(flat.rouge1),
        rouge2: prf(flat.rouge2),
        rouge_l: prf(flat.rouge_l),
        meteor: flat.meteor,
        bertscore: PRF {
            precision: flat.bertscore_p,
            recall: flat.bertscore_r,
            f1: flat.bertscore_f1,
        },
        scale: flat.scale,
    }
}

/// Metric name -> percent-scale value, as used by comparison tables.
pub fn metric_map(run: &RunRecord) -> BTreeMap<String, f64> {
    run.metrics
        .to_percent()
        .to_flat()
        .named_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Presentation order for known metrics in reports.
const METRIC_ORDER: [&str; 6] = [
    "bleu",
    "rouge1",
    "rouge2",
    "rougeL",
    "bertscore_f1",
    "meteor",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: f64,
    pub proposed: f64,
    /// Relative improvement in percent, rounded half-up to one decimal;
    /// undefined when the baseline is zero.
    pub delta_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Round half-up to one decimal: 15.734 -> 15.7, -1.55 -> -1.5 (toward +inf
/// at exact halves).
pub fn round_half_up_1dp(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

/// Per-metric relative deltas between two metric maps with identical keys.
pub fn compare(
    baseline: &BTreeMap<String, f64>,
    proposed: &BTreeMap<String, f64>,
) -> Result<ComparisonTable> {
    let b_keys: Vec<&String> = baseline.keys().collect();
    let p_keys: Vec<&String> = proposed.keys().collect();
    if b_keys != p_keys {
        bail!("metric keys differ: baseline {b_keys:?} vs proposed {p_keys:?}");
    }
    let mut names: Vec<&str> = METRIC_ORDER
        .iter()
        .copied()
        .filter(|m| baseline.contains_key(*m))
        .collect();
    for key in baseline.keys() {
        if !names.contains(&key.as_str()) {
            names.push(key);
        }
    }
    let rows = names
        .into_iter()
        .map(|name| {
            let b = baseline[name];
            let p = proposed[name];
            let delta_percent = if b == 0.0 {
                None
            } else {
                Some(round_half_up_1dp((p - b) / b * 100.0))
            };
            ComparisonRow {
                metric: name.to_string(),
                baseline: b,
                proposed: p,
                delta_percent,
            }
        })
        .collect();
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn delta(&self, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .and_then(|r| r.delta_percent)
    }

    fn delta_string(row: &ComparisonRow) -> String {
        match row.delta_percent {
            Some(d) => format!("{:+.1}%", d),
            None => "—".to_string(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tbaseline\tproposed\tdelta\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{:.2}\t{:.2}\t{}\n",
                row.metric,
                row.baseline,
                row.proposed,
                Self::delta_string(row)
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| metric | baseline | proposed | delta |\n|---|---|---|---|\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {:.2} | {:.2} | {} |\n",
                row.metric,
                row.baseline,
                row.proposed,
                Self::delta_string(row)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn headline_length_histogram(texts: &[&str]) -> Vec<(u64, u64)> {
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for t in texts {
        *hist.entry(text::word_count(t) as u64).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}

/// Render comparison tables, a side-by-side sample dump, and headline-length
/// histogram data for the given runs.
pub fn render_report(
    runs: &[RunRecord],
    comparisons: &[ComparisonTable],
    format: ReportFormat,
    sample_limit: usize,
) -> Result<String> {
    if runs.is_empty() {
        bail!("report requires at least one run");
    }
    let baseline_run = runs.iter().find(|r| r.mode == Mode::Baseline);
    let proposed_run = runs.iter().find(|r| r.mode == Mode::Multigen);
    let sample_rows = sample_side_by_side(runs, baseline_run, proposed_run, sample_limit);

    match format {
        ReportFormat::Json => {
            let value = serde_json::json!({
                "runs": runs.iter().map(|r| serde_json::json!({
                    "run_id": r.run_id,
                    "mode": r.mode,
                    "metrics": r.metrics.to_percent().to_flat(),
                    "samples": r.samples.len(),
                })).collect::<Vec<_>>(),
                "comparisons": comparisons,
                "samples": sample_rows.iter().map(|(id, refr, base, prop)| serde_json::json!({
                    "id": id,
                    "reference": refr,
                    "baseline": base,
                    "multigen": prop,
                })).collect::<Vec<_>>(),
                "headline_length_histograms": runs.iter().map(|r| serde_json::json!({
                    "run_id": r.run_id,
                    "reference": headline_length_histogram(
                        &r.samples.iter().map(|s| s.reference.as_str()).collect::<Vec<_>>()),
                    "generated": headline_length_histogram(
                        &r.samples.iter().map(|s| s.generated.as_str()).collect::<Vec<_>>()),
                })).collect::<Vec<_>>(),
            });
            Ok(serde_json::to_string_pretty(&value).expect("report serialization"))
        }
        ReportFormat::Tsv | ReportFormat::Markdown => {
            let mut out = String::new();
            for (i, table) in comparisons.iter().enumerate() {
                if comparisons.len() > 1 {
                    out.push_str(&format!("# comparison {}\n", i + 1));
                }
                out.push_str(&match format {
                    ReportFormat::Tsv => table.to_tsv(),
                    _ => table.to_markdown(),
                });
                out.push('\n');
            }
            out.push_str("# samples (reference vs baseline vs multigen)\n");
            match format {
                ReportFormat::Tsv => {
                    out.push_str("id\treference\tbaseline\tmultigen\n");
                    for (id, refr, base, prop) in &sample_rows {
                        out.push_str(&format!("{id}\t{refr}\t{base}\t{prop}\n"));
                    }
                }
                _ => {
                    out.push_str("| id | reference | baseline | multigen |\n|---|---|---|---|\n");
                    for (id, refr, base, prop) in &sample_rows {
                        out.push_str(&format!("| {id} | {refr} | {base} | {prop} |\n"));
                    }
                }
            }
            out.push('\n');
            for run in runs {
                out.push_str(&format!(
                    "# headline length histogram: {} ({})\nbin,count\n",
                    run.run_id, run.mode
                ));
                let generated: Vec<&str> =
                    run.samples.iter().map(|s| s.generated.as_str()).collect();
                for (bin, count) in headline_length_histogram(&generated) {
                    out.push_str(&format!("{bin},{count}\n"));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

type SampleRow = (usize, String, String, String);

fn sample_side_by_side(
    runs: &[RunRecord],
    baseline: Option<&RunRecord>,
    proposed: Option<&RunRecord>,
    limit: usize,
) -> Vec<SampleRow> {
    let primary = baseline.or(proposed).unwrap_or(&runs[0]);
    let by_id = |run: Option<&RunRecord>, id: usize| -> String {
        run.and_then(|r| r.samples.iter().find(|s| s.id == id))
            .map(|s| s.generated.clone())
            .unwrap_or_default()
    };
    primary
        .samples
        .iter()
        .take(limit)
        .map(|s| {
            (
                s.id,
                s.reference.clone(),
                by_id(baseline, s.id),
                by_id(proposed, s.id),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_of(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn compare_reference_rows() {
        // published comparison rows used as arithmetic test vectors
        let baseline = map_of(&[("bleu", 16.08), ("rouge2", 7.90)]);
        let proposed = map_of(&[("bleu", 18.61), ("rouge2", 7.78)]);
        let table = compare(&baseline, &proposed).unwrap();
        assert_eq!(table.delta("bleu"), Some(15.7));
        assert_eq!(table.delta("rouge2"), Some(-1.5));
    }

    #[test]
    fn compare_identical_runs_gives_zero_deltas() {
        let a = map_of(&[("bleu", 10.0), ("meteor", 5.0)]);
        let table = compare(&a, &a.clone()).unwrap();
        assert!(table.rows.iter().all(|r| r.delta_percent == Some(0.0)));
    }

    #[test]
    fn compare_rejects_key_mismatch() {
        let a = map_of(&[("bleu", 10.0)]);
        let b = map_of(&[("rouge1", 10.0)]);
        assert!(compare(&a, &b).is_err());
    }

    #[test]
    fn zero_baseline_renders_as_undefined() {
        let a = map_of(&[("bleu", 0.0)]);
        let b = map_of(&[("bleu", 3.0)]);
        let table = compare(&a, &b).unwrap();
        assert_eq!(table.delta("bleu"), None);
        assert!(table.to_tsv().contains("—"));
    }

    #[test]
    fn rounding_is_half_up_to_one_decimal() {
        assert_eq!(round_half_up_1dp(15.734), 15.7);
        assert_eq!(round_half_up_1dp(15.75), 15.8);
        assert_eq!(round_half_up_1dp(-1.519), -1.5);
        assert_eq!(round_half_up_1dp(-1.55), -1.5); // half goes toward +inf
        assert_eq!(round_half_up_1dp(-1.551), -1.6);
        assert_eq!(round_half_up_1dp(34.597), 34.6);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("baseline".parse::<Mode>(), Ok(Mode::Baseline));
        assert_eq!(" MultiGen ".parse::<Mode>(), Ok(Mode::Multigen));
        assert!("hybrid".parse::<Mode>().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys_and_out_of_space_hparams() {
        let raw = r#"{
            "corpus_path": "x.jsonl",
            "split": {"train": 1, "validation": 1, "test": 1, "seed": 0},
            "output_dir": "out",
            "mystery_knob": 3
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(raw).is_err());

        let mut config: ExperimentConfig = serde_json::from_str(
            r#"{
                "corpus_path": "x.jsonl",
                "split": {"train": 1, "validation": 1, "test": 1, "seed": 0},
                "output_dir": "out"
            }"#,
        )
        .unwrap();
        assert!(config.validate().is_ok());
        config.training.learning_rate = 0.5;
        assert!(config.validate().is_err());
        config.allow_custom_hparams = true;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn report_format_parsing_rejects_unknown() {
        assert!("tsv".parse::<ReportFormat>().is_ok());
        assert!("yaml".parse::<ReportFormat>().is_err());
    }
}
