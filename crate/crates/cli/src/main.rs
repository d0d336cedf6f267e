mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kbe_core::dataset::{dataset_files, read_objects, sample_rows, write_jsonl};
use kbe_core::eval::{evaluate, EvalConfig, DEFAULT_MAX_RESPONSE_WORDS};
use kbe_core::explore::DEFAULT_MAX_HOPS;
use kbe_core::graph::DEFAULT_MAX_PATH_LEN;
use kbe_core::lexicon::NounLexicon;
use kbe_core::pipeline::{evolve_dataset, extract_dataset, PipelineConfig};
use kbe_core::provider::offline::source_digest;
use kbe_core::provider::{CachingProvider, ChatClient, ImageMode, OfflineKnowledgeBase, Provider, ResponseCache};
use kbe_core::stats::{stats_for_path, stats_table};
use serde_json::{Map, Value};

use crate::config::FileConfig;

/// Exit status of a run that stopped early on purpose and can be resumed.
const EXIT_PARTIAL: u8 = 3;
/// Exit status of a finished run with flagged samples.
const EXIT_FLAGGED: u8 = 2;

#[derive(Parser)]
#[command(name = "kbe", version, about = "Evolve VQA benchmarks by exploring knowledge graphs")]
struct Cli {
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ProviderArgs {
    /// Answer every prompt from this offline knowledge base (file or directory).
    #[arg(long)]
    offline: Option<PathBuf>,
    /// Cache provider responses under this directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, value_parser = parse_image_mode)]
    image_mode: Option<ImageMode>,
    /// Requests per second.
    #[arg(long)]
    rate_limit: Option<f64>,
}

fn parse_image_mode(s: &str) -> Result<ImageMode, String> {
    match s {
        "url" => Ok(ImageMode::Url),
        "inline" => Ok(ImageMode::Inline),
        "omit" => Ok(ImageMode::Omit),
        _ => Err(format!("expected url, inline or omit, got `{s}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract visual, textual and key triplet graphs for every sample.
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run the full evolution pipeline and write one dataset per hop.
    Evolve {
        input: PathBuf,
        /// Hops to explore (at most 10).
        #[arg(long)]
        hops: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Longest path considered when re-selecting a key.
        #[arg(long)]
        max_path_len: Option<usize>,
        /// Discard a journal left by a run with other settings.
        #[arg(long)]
        restart: bool,
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Judge model responses against a dataset and tabulate accuracy per hop.
    Eval {
        /// A hop file or an evolve output directory.
        dataset: PathBuf,
        /// JSON lines of {"sample_id", "response"}.
        responses: PathBuf,
        /// Write the table here (and a JSON summary next to it).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSON summary path; defaults to the table path with a .json extension.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Truncate responses to this many words before judging (0 keeps all).
        #[arg(long)]
        max_words: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Question/answer length, key size and relation counts.
    Stats {
        /// Dataset files or evolve output directories.
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Only word counts; for datasets without key triplets.
        #[arg(long)]
        text_only: bool,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Draw a random sample of evolved questions for human review.
    ExportReview {
        dataset: PathBuf,
        #[arg(short = 'n', long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Extract {
            input,
            output,
            jobs,
            provider,
        } => {
            let (provider, _) = build_provider(&provider, &file)?;
            let jobs = jobs.or(file.pipeline.jobs).unwrap_or(0);
            let entries = extract_dataset(&input, &output, &provider, jobs)?;
            let failed = entries.iter().filter(|e| !e.ok).count();
            eprintln!("extracted {} of {} samples into {}", entries.len() - failed, entries.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve {
            input,
            hops,
            seed,
            output,
            jobs,
            max_path_len,
            restart,
            stop_after,
            provider,
        } => {
            let (provider, label) = build_provider(&provider, &file)?;
            let lexicon = match &file.pipeline.lexicon {
                Some(p) => NounLexicon::from_file(p).with_context(|| format!("reading lexicon {}", p.display()))?,
                None => NounLexicon::bundled(),
            };
            let config = PipelineConfig {
                max_hops: hops.or(file.pipeline.hops).unwrap_or(DEFAULT_MAX_HOPS),
                seed: seed.or(file.pipeline.seed).unwrap_or(0),
                jobs: jobs.or(file.pipeline.jobs).unwrap_or(0),
                max_path_len: max_path_len.or(file.pipeline.max_path_len).unwrap_or(DEFAULT_MAX_PATH_LEN),
                provider_label: label,
                restart,
                stop_after,
            };
            let outcome = evolve_dataset(&input, &output, &config, &provider, &lexicon)?;
            if !outcome.complete {
                eprintln!(
                    "stopped after {} samples; rerun the same command to resume from {}",
                    outcome.processed,
                    output.display()
                );
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
            print!("{}", outcome.report.to_text());
            if outcome.report.flagged > 0 {
                eprintln!("{} samples flagged; see report.json", outcome.report.flagged);
                return Ok(ExitCode::from(EXIT_FLAGGED));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            dataset,
            responses,
            output,
            summary,
            max_words,
            jobs,
            provider,
        } => {
            let (provider, _) = build_provider(&provider, &file)?;
            let config = EvalConfig {
                max_response_words: max_words.or(file.eval.max_response_words).unwrap_or(DEFAULT_MAX_RESPONSE_WORDS),
                jobs: jobs.or(file.eval.jobs).unwrap_or(0),
            };
            let report = evaluate(&dataset, &responses, &provider, &config)?;
            let table = report.to_table();
            let unjudged: usize = report.hops.iter().map(|h| h.unjudged).sum();
            if unjudged > 0 {
                eprintln!("{unjudged} samples could not be judged and are left out of the accuracy");
            }
            match output {
                Some(path) => {
                    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
                    let summary = summary.unwrap_or_else(|| path.with_extension("json"));
                    let mut json = serde_json::to_string_pretty(&report.summary())?;
                    json.push('\n');
                    std::fs::write(&summary, json).with_context(|| format!("writing {}", summary.display()))?;
                    print!("{table}");
                }
                None => {
                    print!("{table}");
                    if let Some(summary) = summary {
                        std::fs::write(&summary, serde_json::to_string_pretty(&report.summary())? + "\n")?;
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats {
            datasets,
            text_only,
            json,
        } => {
            let mut columns = Vec::new();
            for path in &datasets {
                columns.extend(stats_for_path(path, text_only).with_context(|| format!("stats for {}", path.display()))?);
            }
            if json {
                let obj: Map<String, Value> = columns
                    .iter()
                    .map(|(label, s)| Ok((label.clone(), serde_json::to_value(s)?)))
                    .collect::<Result<_>>()?;
                println!("{}", serde_json::to_string_pretty(&obj)?);
            } else {
                print!("{}", stats_table(&columns));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportReview {
            dataset,
            count,
            seed,
            output,
        } => {
            let rows = review_bundle(&dataset, count, seed)?;
            match output {
                Some(path) => write_jsonl(&path, &rows).with_context(|| format!("writing {}", path.display()))?,
                None => {
                    for row in &rows {
                        println!("{}", Value::Object(row.clone()));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Picks the backend and a label identifying it for run fingerprints.
fn build_provider(args: &ProviderArgs, file: &FileConfig) -> Result<(Box<dyn Provider>, String)> {
    let mut section = config::ProviderSection {
        offline: args.offline.clone().or_else(|| file.provider.offline.clone()),
        cache_dir: args.cache_dir.clone().or_else(|| file.provider.cache_dir.clone()),
        endpoint: args.endpoint.clone().or_else(|| file.provider.endpoint.clone()),
        model: args.model.clone().or_else(|| file.provider.model.clone()),
        image_mode: args.image_mode.or(file.provider.image_mode),
        rate_limit: args.rate_limit.or(file.provider.rate_limit),
        ..Default::default()
    };
    section.api_key_env = file.provider.api_key_env.clone();
    section.temperature = file.provider.temperature;
    section.max_tokens = file.provider.max_tokens;
    section.max_attempts = file.provider.max_attempts;
    section.backoff_ms = file.provider.backoff_ms;
    section.image_root = file.provider.image_root.clone();
    section.timeout_secs = file.provider.timeout_secs;

    let (inner, label): (Box<dyn Provider>, String) = match &section.offline {
        Some(kb) => {
            let loaded = OfflineKnowledgeBase::load(kb).with_context(|| format!("loading knowledge base {}", kb.display()))?;
            (Box::new(loaded), format!("offline:{}", source_digest(kb)?))
        }
        None => {
            let chat = section.chat_config(|name| std::env::var(name).ok());
            if chat.api_key.is_none() {
                log::warn!("no API key in the environment; requests are sent unauthenticated");
            }
            let label = format!("chat:{}:{}:{}", chat.endpoint, chat.model, chat.temperature);
            let client = ChatClient::from_config(chat).map_err(anyhow::Error::msg)?;
            (Box::new(client), label)
        }
    };
    match &section.cache_dir {
        Some(dir) => {
            let cache = ResponseCache::open(dir).with_context(|| format!("opening cache {}", dir.display()))?;
            Ok((Box::new(CachingProvider::new(inner, cache)), label))
        }
        None => Ok((inner, label)),
    }
}

/// A seeded sample of dataset rows with empty review fields.
fn review_bundle(dataset: &Path, count: usize, seed: u64) -> Result<Vec<Map<String, Value>>> {
    let mut rows = Vec::new();
    for file in dataset_files(dataset)? {
        rows.extend(read_objects(&file)?.into_iter().map(|(_, obj)| obj));
    }
    if rows.is_empty() {
        bail!("{}: no samples", dataset.display());
    }
    if count > rows.len() {
        log::warn!("asked for {count} samples but only {} exist", rows.len());
    }
    let mut picked = sample_rows(&rows, count, seed);
    for row in &mut picked {
        let mut review = Map::new();
        for field in ["vqa_reasonable", "triplet_correct", "vqa_triplets_alignment"] {
            review.insert(field.into(), Value::Null);
        }
        row.insert("review".into(), Value::Object(review));
    }
    Ok(picked)
}
