//! `hgen` — headline-generation experiment driver.
//!
//! Verbs: stats, split, preprocess, train, generate, evaluate, run, compare,
//! report, synth. Exit codes: 0 success, 1 validation error, 2 i/o error,
//! 3 training divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hgen_core::corpus::{
    compute_statistics, histogram_csv, load_corpus, split_corpus, write_csv, write_jsonl,
    CorpusError, CorpusFormat, NewsRecord, StatisticsOptions,
};
use hgen_core::fusion::{build_baseline_input, build_multigen_input};
use hgen_core::harness::{
    compare, load_run, metric_map, render_report, run_experiment, training_vocabulary,
    ExperimentConfig, Mode, ReportFormat,
};
use hgen_core::metrics::{evaluate_corpus, FlatMetricReport, HashEmbedder};
use hgen_core::model::{
    generate, init_model, load_checkpoint, save_checkpoint, train, ModelError,
};
use hgen_core::preprocess::{detokenize_clean, normalize_text, tokenize, truncate};
use hgen_core::synth;

#[derive(Parser)]
#[command(name = "hgen", version, about = "Headline-generation experiment toolkit")]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seed in the configuration (split, model, training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input construction: baseline or multigen.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file to read.
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus file format: jsonl or csv.
    #[arg(long, default_value = "jsonl")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics: cross-tabs, averages, novelty, histograms.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Histogram bin width for article lengths.
        #[arg(long, default_value_t = 100)]
        article_bin: usize,
        /// Histogram bin width for headline lengths.
        #[arg(long, default_value_t = 5)]
        headline_bin: usize,
    },
    /// Deterministic train/validation/test split.
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Comma-separated train,validation,test counts.
        #[arg(long)]
        counts: String,
        /// Shuffle seed.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Build the vocabulary and dump rendered model inputs.
    Preprocess {
        /// How many input lines to dump (0 = all).
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Train a model on the configured corpus and persist a checkpoint.
    Train,
    /// Generate headlines for the test split from a checkpoint.
    Generate {
        /// Model checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate generated-vs-reference pairs from a samples file or run.
    Evaluate {
        /// samples.jsonl file (fields: id, reference, generated).
        #[arg(long, conflicts_with = "run")]
        samples: Option<PathBuf>,
        /// Run directory containing samples.jsonl.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Full experiment: load, split, train, generate, evaluate, persist.
    Run,
    /// Compare two runs (or metrics.json files): per-metric deltas.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        proposed: PathBuf,
        #[arg(long, default_value = "tsv")]
        format: String,
    },
    /// Render a full report: comparison, sample dump, histogram data.
    Report {
        #[arg(long)]
        baseline_run: PathBuf,
        #[arg(long)]
        proposed_run: PathBuf,
        #[arg(long, default_value = "tsv")]
        format: String,
        /// Maximum sample rows in the side-by-side dump.
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Write a synthetic corpus: statistical replica or sentiment probe.
    Synth {
        /// Corpus kind: replica or probe.
        #[arg(long, default_value = "replica")]
        kind: String,
        /// Number of records (probe only; replica is fixed-size).
        #[arg(long, default_value_t = 512)]
        n: usize,
        /// Output format: jsonl or csv.
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// Output file.
        #[arg(long = "file")]
        file: PathBuf,
        /// Generator seed.
        #[arg(long = "gen-seed", default_value_t = 7)]
        gen_seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// 1 validation, 2 i/o, 3 divergence.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(model_err) = cause.downcast_ref::<ModelError>() {
            return match model_err {
                ModelError::Divergence { .. } => 3,
                ModelError::Io(_) => 2,
                _ => 1,
            };
        }
        if let Some(corpus_err) = cause.downcast_ref::<CorpusError>() {
            return match corpus_err {
                CorpusError::Io { .. } => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required for this command"))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        config.model.seed = seed;
        config.training.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.display().to_string();
    }
    Ok(config)
}

fn mode_of(cli: &Cli) -> Result<Mode> {
    match &cli.mode {
        None => Ok(Mode::Baseline),
        Some(raw) => raw.parse::<Mode>().map_err(|e| anyhow!(e)),
    }
}

fn parse_format(raw: &str) -> Result<CorpusFormat> {
    raw.parse::<CorpusFormat>().map_err(|e| anyhow!(e))
}

fn load_records(args: &CorpusArgs) -> Result<Vec<NewsRecord>> {
    let format = parse_format(&args.format)?;
    Ok(load_corpus(&args.corpus, format)?)
}

fn out_dir(cli: &Cli) -> Option<&Path> {
    cli.out.as_deref()
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Stats {
            corpus,
            article_bin,
            headline_bin,
        } => {
            let records = load_records(corpus)?;
            let options = StatisticsOptions {
                article_bin_width: *article_bin,
                headline_bin_width: *headline_bin,
                ..StatisticsOptions::default()
            };
            let stats = compute_statistics(&records, &options)?;
            print!("{}", stats.to_tsv());
            if let Some(dir) = out_dir(cli) {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join("stats.json"),
                    serde_json::to_string_pretty(&stats)?,
                )?;
                std::fs::write(
                    dir.join("article_length_histogram.csv"),
                    histogram_csv(&stats.article_length_histogram),
                )?;
                std::fs::write(
                    dir.join("headline_length_histogram.csv"),
                    histogram_csv(&stats.headline_length_histogram),
                )?;
            }
            Ok(())
        }
        Command::Split {
            corpus,
            counts,
            split_seed,
        } => {
            let records = load_records(corpus)?;
            let parts: Vec<usize> = counts
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .context("counts must be three comma-separated integers")?;
            if parts.len() != 3 {
                bail!("counts must be three comma-separated integers");
            }
            let seed = cli.seed.unwrap_or(*split_seed);
            let split = split_corpus(&records, (parts[0], parts[1], parts[2]), seed)?;
            let json = serde_json::to_string_pretty(&split)?;
            match out_dir(cli) {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("split.json"), json)?;
                    println!(
                        "split written: {} train / {} validation / {} test",
                        split.train.len(),
                        split.validation.len(),
                        split.test.len()
                    );
                }
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Preprocess { limit } => {
            let config = load_config(cli)?;
            let mode = mode_of(cli)?;
            let records = load_corpus(Path::new(&config.corpus_path), {
                parse_format(&config.corpus_format)?
            })?;
            let split = split_corpus(
                &records,
                (config.split.train, config.split.validation, config.split.test),
                config.split.seed,
            )?;
            let vocab = training_vocabulary(&config, &records, &split.train)?;
            let dir = out_dir(cli)
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from(&config.output_dir));
            std::fs::create_dir_all(&dir)?;
            vocab.save(&dir.join("vocab.txt"))?;
            let max_len = config.training.input_token_length;
            let mut dump = String::new();
            let take = if *limit == 0 { split.train.len() } else { *limit };
            for &id in split.train.iter().take(take) {
                let input = match mode {
                    Mode::Baseline => {
                        build_baseline_input(&records[id], &vocab, &config.fusion, max_len)?
                    }
                    Mode::Multigen => {
                        build_multigen_input(&records[id], &vocab, &config.fusion, max_len)?
                    }
                };
                dump.push_str(&input.dump_line(id, &vocab));
                dump.push('\n');
            }
            std::fs::write(dir.join("inputs.txt"), &dump)?;
            println!(
                "vocabulary of {} tokens and {take} rendered inputs written to {}",
                vocab.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Train => {
            let config = load_config(cli)?;
            let mode = mode_of(cli)?;
            let (params, losses, dir) = train_from_config(&config, mode)?;
            save_checkpoint(&params, &dir.join("model.ckpt"))?;
            let mut loss_csv = String::from("epoch,loss\n");
            for (i, loss) in losses.iter().enumerate() {
                loss_csv.push_str(&format!("{},{}\n", i + 1, loss));
            }
            std::fs::write(dir.join("loss.csv"), loss_csv)?;
            println!(
                "trained {} epochs, final loss {:.4}; checkpoint at {}",
                losses.len(),
                losses.last().copied().unwrap_or(f64::NAN),
                dir.join("model.ckpt").display()
            );
            Ok(())
        }
        Command::Generate { checkpoint } => {
            let config = load_config(cli)?;
            let mode = mode_of(cli)?;
            let params = load_checkpoint(checkpoint)?;
            let records = load_corpus(
                Path::new(&config.corpus_path),
                parse_format(&config.corpus_format)?,
            )?;
            let split = split_corpus(
                &records,
                (config.split.train, config.split.validation, config.split.test),
                config.split.seed,
            )?;
            let vocab = training_vocabulary(&config, &records, &split.train)?;
            let dir = out_dir(cli)
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from(&config.output_dir));
            std::fs::create_dir_all(&dir)?;
            let mut lines = String::new();
            for &id in &split.test {
                let input = match mode {
                    Mode::Baseline => build_baseline_input(
                        &records[id],
                        &vocab,
                        &config.fusion,
                        config.training.input_token_length,
                    )?,
                    Mode::Multigen => build_multigen_input(
                        &records[id],
                        &vocab,
                        &config.fusion,
                        config.training.input_token_length,
                    )?,
                };
                let output = generate(&params, &input, &config.decode)?;
                let generated = detokenize_clean(&output, &vocab)?;
                let sample = serde_json::json!({
                    "id": id,
                    "input_rendered": input.render(&vocab),
                    "reference": records[id].headline,
                    "generated": generated,
                });
                lines.push_str(&sample.to_string());
                lines.push('\n');
            }
            std::fs::write(dir.join("samples.jsonl"), lines)?;
            println!(
                "{} generations written to {}",
                split.test.len(),
                dir.join("samples.jsonl").display()
            );
            Ok(())
        }
        Command::Evaluate { samples, run } => {
            let samples_path = match (samples, run) {
                (Some(path), None) => path.clone(),
                (None, Some(dir)) => dir.join("samples.jsonl"),
                _ => bail!("provide exactly one of --samples or --run"),
            };
            let raw = std::fs::read_to_string(&samples_path)
                .with_context(|| format!("reading {}", samples_path.display()))?;
            let mut generated = Vec::new();
            let mut references = Vec::new();
            for (i, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(line)
                    .with_context(|| format!("samples line {}", i + 1))?;
                let field = |k: &str| -> Result<String> {
                    Ok(value
                        .get(k)
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| anyhow!("samples line {}: missing field {k}", i + 1))?
                        .to_string())
                };
                generated.push(field("generated")?);
                references.push(field("reference")?);
            }
            let embedder = HashEmbedder::new(64, 0);
            let report = evaluate_corpus(&generated, &references, &embedder)?;
            let percent = report.to_percent().to_flat();
            println!("metric\tvalue");
            for (name, value) in percent.named_values() {
                println!("{name}\t{value:.2}");
            }
            if let Some(dir) = out_dir(cli) {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("metrics.json"), report.to_flat().to_json_pretty())?;
            }
            Ok(())
        }
        Command::Run => {
            let config = load_config(cli)?;
            let mode = mode_of(cli)?;
            let run = run_experiment(&config, mode)?;
            let percent = run.metrics.to_percent().to_flat();
            println!("run {} complete ({} mode)", run.run_id, run.mode);
            println!("metric\tvalue");
            for (name, value) in percent.named_values() {
                println!("{name}\t{value:.2}");
            }
            Ok(())
        }
        Command::Compare {
            baseline,
            proposed,
            format,
        } => {
            let base = metrics_from_path(baseline)?;
            let prop = metrics_from_path(proposed)?;
            let table = compare(&base, &prop)?;
            let format: ReportFormat = format.parse().map_err(|e: String| anyhow!(e))?;
            match format {
                ReportFormat::Tsv => print!("{}", table.to_tsv()),
                ReportFormat::Markdown => print!("{}", table.to_markdown()),
                ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&table)?),
            }
            if let Some(dir) = out_dir(cli) {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join("comparison.json"),
                    serde_json::to_string_pretty(&table)?,
                )?;
            }
            Ok(())
        }
        Command::Report {
            baseline_run,
            proposed_run,
            format,
            samples,
        } => {
            let base = load_run(baseline_run)?;
            let prop = load_run(proposed_run)?;
            let table = compare(&metric_map(&base), &metric_map(&prop))?;
            let format: ReportFormat = format.parse().map_err(|e: String| anyhow!(e))?;
            let runs = vec![base, prop];
            let document = render_report(&runs, &[table], format, *samples)?;
            match out_dir(cli) {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let name = match format {
                        ReportFormat::Tsv => "report.tsv",
                        ReportFormat::Json => "report.json",
                        ReportFormat::Markdown => "report.md",
                    };
                    std::fs::write(dir.join(name), &document)?;
                    println!("report written to {}", dir.join(name).display());
                }
                None => print!("{document}"),
            }
            Ok(())
        }
        Command::Synth {
            kind,
            n,
            format,
            file,
            gen_seed,
        } => {
            let records = match kind.trim().to_ascii_lowercase().as_str() {
                "replica" => synth::replica_corpus(*gen_seed),
                "probe" => synth::sentiment_probe_corpus(*n, *gen_seed),
                other => bail!("unknown synthetic corpus kind {other:?}"),
            };
            match parse_format(format)? {
                CorpusFormat::Jsonl => write_jsonl(file, &records)?,
                CorpusFormat::Csv => write_csv(file, &records)?,
            }
            println!("{} records written to {}", records.len(), file.display());
            Ok(())
        }
    }
}

type TrainOutput = (hgen_core::model::ModelParameters, Vec<f64>, PathBuf);

fn train_from_config(config: &ExperimentConfig, mode: Mode) -> Result<TrainOutput> {
    let records = load_corpus(
        Path::new(&config.corpus_path),
        config.corpus_format.parse::<CorpusFormat>().map_err(|e| anyhow!(e))?,
    )?;
    let split = split_corpus(
        &records,
        (config.split.train, config.split.validation, config.split.test),
        config.split.seed,
    )?;
    let vocab = training_vocabulary(config, &records, &split.train)?;
    let mut pairs = Vec::with_capacity(split.train.len());
    for &id in &split.train {
        let input = match mode {
            Mode::Baseline => build_baseline_input(
                &records[id],
                &vocab,
                &config.fusion,
                config.training.input_token_length,
            )?,
            Mode::Multigen => build_multigen_input(
                &records[id],
                &vocab,
                &config.fusion,
                config.training.input_token_length,
            )?,
        };
        let normalized = normalize_text(&records[id].headline, &config.fusion.normalization);
        let tokens = tokenize(&normalized, &vocab);
        let mut target = truncate(
            &tokens,
            config.training.target_token_length.saturating_sub(1).max(1),
        )?;
        target.ids.push(hgen_core::preprocess::EOS_ID);
        pairs.push((input, target));
    }
    let mut model_config = config.model;
    model_config.vocab_size = vocab.len();
    let mut params = init_model(&model_config)?;
    let losses = train(&mut params, &pairs, &config.training)?;
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    vocab.save(&dir.join("vocab.txt"))?;
    Ok((params, losses, dir))
}

fn metrics_from_path(path: &Path) -> Result<BTreeMap<String, f64>> {
    let file = if path.is_dir() {
        path.join("metrics.json")
    } else {
        path.to_path_buf()
    };
    let raw = std::fs::read_to_string(&file)
        .with_context(|| format!("reading {}", file.display()))?;
    let flat: FlatMetricReport =
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", file.display()))?;
    let percent = if matches!(flat.scale, hgen_core::metrics::Scale::Unit) {
        FlatMetricReport {
            bleu: flat.bleu * 100.0,
            rouge1: flat.rouge1 * 100.0,
            rouge2: flat.rouge2 * 100.0,
            rouge_l: flat.rouge_l * 100.0,
            meteor: flat.meteor * 100.0,
            bertscore_p: flat.bertscore_p * 100.0,
            bertscore_r: flat.bertscore_r * 100.0,
            bertscore_f1: flat.bertscore_f1 * 100.0,
            scale: hgen_core::metrics::Scale::Percent,
        }
    } else {
        flat
    };
    Ok(percent
        .named_values()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect())
}
