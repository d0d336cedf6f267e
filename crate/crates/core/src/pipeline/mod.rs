//! Extract, explore and express over a whole dataset, with a resumable
//! journal and one output file per hop.

mod journal;
mod report;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{evolved_row, read_samples, write_jsonl, DatasetError, DatasetRow};
use crate::explore::{explore_one_hop, route_sample_with_limit, Route, MAX_HOPS_LIMIT};
use crate::graph::{key_subgraph_is_valid, EvolutionRecord, SampleGraphs, Triplet, VqaSample, DEFAULT_MAX_PATH_LEN};
use crate::lexicon::NounLexicon;
use crate::parse::{format_bare, format_labeled, parse_labeled_triplets, serialize_key_triplets, ParsedExtraction};
use crate::prompts::{render_prompt, PromptError, PromptKind};
use crate::provider::{Provider, ProviderError, ProviderRequest, RequestContext};

pub use journal::Journal;
pub use report::{FlaggedSample, HopStats, RunReport};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Text substituted for an empty triplet list in prompts.
const NO_TRIPLETS: &str = "None";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("key subgraph has no visual edge")]
    InvalidKeyGraph,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExpressError {
    #[error("generated question {question:?} rejected: {reason}")]
    Validation { question: String, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Errors that stop a whole run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("journal: {0}")]
    Journal(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    InvalidKeyGraph,
    NoValidPath,
    ExtractionFailed,
    /// The question for a re-selected key could not be generated.
    ExpressionFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleStatus {
    /// Reached the last hop.
    Completed,
    /// Stopped after `last_hop`: no usable candidate or a provider failure.
    Terminal { last_hop: u32, reason: String },
    /// Question generation failed validation at `hop`; that hop and later
    /// ones are not emitted.
    Flagged { hop: u32, reason: String, question: String },
    Dropped { reason: DropReason, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub record_id: String,
    pub parent_id: Option<String>,
    #[serde(flatten)]
    pub record: EvolutionRecord,
}

impl From<EvolutionRecord> for JournalRecord {
    fn from(record: EvolutionRecord) -> Self {
        JournalRecord {
            record_id: record.record_id(),
            parent_id: record.parent_id(),
            record,
        }
    }
}

/// Everything known about one input sample after evolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    #[serde(flatten)]
    pub status: SampleStatus,
    pub reselected: bool,
    /// Emitted records, hop 0 first.
    pub records: Vec<JournalRecord>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub max_hops: u32,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub max_path_len: usize,
    /// Identifies the backend in the journal fingerprint.
    pub provider_label: String,
    /// Discard an existing journal instead of resuming it.
    pub restart: bool,
    /// Process at most this many pending samples, then stop without
    /// writing outputs. Used to exercise resumption.
    pub stop_after: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_hops: crate::explore::DEFAULT_MAX_HOPS,
            seed: 0,
            jobs: 0,
            max_path_len: DEFAULT_MAX_PATH_LEN,
            provider_label: String::new(),
            restart: false,
            stop_after: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.max_hops > MAX_HOPS_LIMIT {
            return Err(RunError::Config(format!("max_hops {} exceeds {MAX_HOPS_LIMIT}", self.max_hops)));
        }
        if self.max_path_len == 0 {
            return Err(RunError::Config("max_path_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    /// False when the run stopped early; only the journal was written.
    pub complete: bool,
    /// Samples processed by this invocation (not replayed).
    pub processed: usize,
}

fn request<P: Provider + ?Sized>(
    provider: &P,
    kind: PromptKind,
    prompt: String,
    sample: &VqaSample,
    attempt: u32,
    context: RequestContext,
) -> Result<String, ProviderError> {
    let req = ProviderRequest::new(kind, prompt, Some(&sample.image_ref))
        .with_attempt(attempt)
        .with_context(RequestContext {
            sample_id: Some(sample.sample_id.clone()),
            ..context
        });
    provider.complete(&req)
}

fn relabel(ts: &[Triplet], prefix: char) -> Vec<Triplet> {
    ts.iter()
        .enumerate()
        .map(|(i, t)| t.clone().with_id(format!("{prefix}{}", i + 1)))
        .collect()
}

fn listing(ts: &[Triplet], prefix: char) -> String {
    if ts.is_empty() {
        NO_TRIPLETS.to_string()
    } else {
        format_labeled(ts, prefix)
    }
}

/// One extraction attempt; `Err` carries the reason for a retry.
fn extract_attempt<P: Provider + ?Sized>(sample: &VqaSample, provider: &P, attempt: u32) -> Result<SampleGraphs, String> {
    let prompt = render_prompt(
        PromptKind::Extract,
        &[("Question content", &sample.question), ("Model response", &sample.answer)],
    )
    .map_err(|e| e.to_string())?;
    let text = request(provider, PromptKind::Extract, prompt, sample, attempt, RequestContext::default())
        .map_err(|e| e.to_string())?;
    let parsed = parse_labeled_triplets(&text).map_err(|e| e.to_string())?;
    let graph = ParsedExtraction {
        visual: relabel(&parsed.visual, 'V'),
        textual: relabel(&parsed.textual, 'T'),
        ..Default::default()
    };
    if graph.visual.is_empty() && graph.textual.is_empty() {
        return Err("no visual or textual triplets".into());
    }

    let prompt = render_prompt(
        PromptKind::KeySelect,
        &[
            ("VQA_Q", &sample.question),
            ("VQA_A", &sample.answer),
            ("Visual_Information_triplets_str", &listing(&graph.visual, 'V')),
            ("Textual_Information_triplets_str", &listing(&graph.textual, 'T')),
        ],
    )
    .map_err(|e| e.to_string())?;
    let text = request(provider, PromptKind::KeySelect, prompt, sample, attempt, RequestContext::default())
        .map_err(|e| e.to_string())?;
    let selected = parse_labeled_triplets(&text).map_err(|e| e.to_string())?;
    let mut key = Vec::new();
    for t in selected.visual.iter().chain(&selected.textual).chain(&selected.rationale) {
        let known = graph
            .visual
            .iter()
            .chain(&graph.textual)
            .find(|g| g.same_fact(t))
            .or_else(|| t.id().and_then(|id| graph.by_id(id)));
        match known {
            Some(k) => key.push(k.clone()),
            None => log::debug!("{}: key triplet {t} not in extraction", sample.sample_id),
        }
    }
    if key.is_empty() {
        return Err("no key triplet matched the extraction".into());
    }
    SampleGraphs::new(sample.clone(), &graph.visual, &graph.textual, key).map_err(|e| e.to_string())
}

/// Builds the visual, textual and key graphs of a sample, retrying once
/// when the provider output cannot be used.
pub fn extract<P: Provider + ?Sized>(sample: &VqaSample, provider: &P) -> Result<SampleGraphs, ExtractError> {
    let graphs = extract_attempt(sample, provider, 0).or_else(|first| {
        log::debug!("{}: extraction retry after: {first}", sample.sample_id);
        extract_attempt(sample, provider, 1)
    });
    let graphs = graphs.map_err(ExtractError::ExtractionFailed)?;
    if !key_subgraph_is_valid(&graphs) {
        return Err(ExtractError::InvalidKeyGraph);
    }
    Ok(graphs)
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whether `phrase` occurs in `text` as a whole-word sequence, ignoring
/// case and punctuation.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    let needle = words(phrase);
    !needle.is_empty() && words(text).windows(needle.len()).any(|w| w == needle.as_slice())
}

fn clean_question(raw: &str) -> String {
    // The label may share a line with the question or sit above it.
    const LABEL: &str = "Generated new VQA Question:";
    let line = raw
        .lines()
        .map(|l| {
            let l = l.trim();
            l.strip_prefix(LABEL).unwrap_or(l).trim()
        })
        .find(|l| !l.is_empty())
        .unwrap_or("");
    line.trim_matches(|c: char| c == '"' || c == '`' || c.is_whitespace()).to_string()
}

fn validate_question(question: &str, old_answer: &str, new_answer: &str) -> Result<(), String> {
    if question.is_empty() {
        return Err("empty question".into());
    }
    if contains_phrase(question, old_answer) {
        return Err(format!("contains the previous answer {old_answer:?}"));
    }
    if contains_phrase(question, new_answer) {
        return Err(format!("contains the new answer {new_answer:?}"));
    }
    Ok(())
}

/// What a new question is generated from.
#[derive(Debug, Clone)]
pub struct ExpressInput<'a> {
    /// The question being evolved and its answer.
    pub parent_question: &'a str,
    pub parent_answer: &'a str,
    /// Triplets shown as the evolved question's rationale.
    pub key: &'a [Triplet],
    /// The triplet that leads to the new answer.
    pub new_triplet: &'a Triplet,
    pub new_answer: &'a str,
    /// The complete new key, used to look the question up offline.
    pub new_key: &'a [Triplet],
}

/// Generates the question for a new key and validates it, retrying once.
pub fn express<P: Provider + ?Sized>(
    input: &ExpressInput<'_>,
    sample: &VqaSample,
    provider: &P,
) -> Result<String, ExpressError> {
    let key_str = serialize_key_triplets(input.key).unwrap_or_else(|_| NO_TRIPLETS.to_string());
    let prompt = render_prompt(
        PromptKind::ExpressQuestion,
        &[
            ("Ori_VQA_Q", input.parent_question),
            ("Ori_VQA_A", input.parent_answer),
            ("Key_Triplets_str", &key_str),
            ("New_VQA_related_Triplets", &format_bare(input.new_triplet)),
            ("New_VQA_Answer", input.new_answer),
        ],
    )?;
    let context = RequestContext {
        triplets: input.new_key.to_vec(),
        answer: Some(input.new_answer.to_string()),
        ..Default::default()
    };
    let mut failure = None;
    for attempt in 0..2 {
        let raw = request(provider, PromptKind::ExpressQuestion, prompt.clone(), sample, attempt, context.clone())?;
        let question = clean_question(&raw);
        match validate_question(&question, input.parent_answer, input.new_answer) {
            Ok(()) => return Ok(question),
            Err(reason) => failure = Some(ExpressError::Validation { question, reason }),
        }
    }
    Err(failure.expect("two attempts were made"))
}

/// Everything a worker needs to evolve samples.
pub struct Evolver<'a, P: ?Sized> {
    pub provider: &'a P,
    pub lexicon: &'a NounLexicon,
    pub max_hops: u32,
    pub seed: u64,
    pub max_path_len: usize,
}

impl<P: Provider + ?Sized> Evolver<'_, P> {
    pub fn evolve_sample(&self, sample: &VqaSample) -> SampleResult {
        let dropped = |reason, detail: String| SampleResult {
            sample_id: sample.sample_id.clone(),
            status: SampleStatus::Dropped { reason, detail },
            reselected: false,
            records: Vec::new(),
        };
        let graphs = match extract(sample, self.provider) {
            Ok(g) => g,
            Err(e @ ExtractError::InvalidKeyGraph) => return dropped(DropReason::InvalidKeyGraph, e.to_string()),
            Err(e) => return dropped(DropReason::ExtractionFailed, e.to_string()),
        };
        let raw = EvolutionRecord {
            base_sample_id: sample.sample_id.clone(),
            hop: 0,
            added_triplets: Vec::new(),
            reselected: false,
            question: sample.question.clone(),
            answer: sample.answer.clone(),
            key: graphs.key.clone(),
        };
        let route = route_sample_with_limit(&graphs, self.lexicon, self.max_path_len);
        let mut result = SampleResult {
            sample_id: sample.sample_id.clone(),
            status: SampleStatus::Completed,
            reselected: false,
            records: Vec::new(),
        };
        let hop0 = match route {
            Route::PosT1 => raw,
            Route::Dropped(e) => return dropped(DropReason::NoValidPath, e.to_string()),
            Route::PosT2(r) => {
                result.reselected = true;
                let last = r.new_key.last().expect("paths have at least one edge");
                let input = ExpressInput {
                    parent_question: &sample.question,
                    parent_answer: &sample.answer,
                    key: &r.new_key,
                    new_triplet: last,
                    new_answer: &r.new_answer,
                    new_key: &r.new_key,
                };
                match express(&input, sample, self.provider) {
                    Ok(question) => EvolutionRecord {
                        reselected: true,
                        question,
                        answer: r.new_answer.clone(),
                        key: r.new_key.clone(),
                        ..raw
                    },
                    Err(ExpressError::Validation { question, reason }) => {
                        result.status = SampleStatus::Flagged { hop: 0, reason, question };
                        return result;
                    }
                    Err(e) => {
                        return dropped(DropReason::ExpressionFailed, e.to_string());
                    }
                }
            }
        };
        result.records.push(hop0.clone().into());

        let mut current = hop0;
        for hop in 1..=self.max_hops {
            let step = match explore_one_hop(&current, sample, self.provider, self.lexicon, self.seed) {
                Ok(s) => s,
                Err(e) => {
                    result.status = SampleStatus::Terminal {
                        last_hop: hop - 1,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
            let input = ExpressInput {
                parent_question: &current.question,
                parent_answer: &current.answer,
                key: &current.key,
                new_triplet: &step.chosen,
                new_answer: &step.new_answer,
                new_key: &step.new_key,
            };
            let question = match express(&input, sample, self.provider) {
                Ok(q) => q,
                Err(ExpressError::Validation { question, reason }) => {
                    result.status = SampleStatus::Flagged { hop, reason, question };
                    break;
                }
                Err(e) => {
                    result.status = SampleStatus::Terminal {
                        last_hop: hop - 1,
                        reason: e.to_string(),
                    };
                    break;
                }
            };
            let mut added = current.added_triplets.clone();
            added.push(step.chosen);
            current = EvolutionRecord {
                base_sample_id: sample.sample_id.clone(),
                hop,
                added_triplets: added,
                reselected: current.reselected,
                question,
                answer: step.new_answer,
                key: step.new_key,
            };
            result.records.push(current.clone().into());
        }
        result
    }
}

fn file_sha256(path: &Path) -> Result<String, RunError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn fingerprint(input_sha: &str, config: &PipelineConfig, lexicon: &NounLexicon) -> String {
    let doc = serde_json::json!({
        "input": input_sha,
        "max_hops": config.max_hops,
        "seed": config.seed,
        "max_path_len": config.max_path_len,
        "provider": config.provider_label,
        "lexicon_size": lexicon.len(),
        "numeric_as_noun": lexicon.numeric_as_noun,
        "proper_noun_heuristic": lexicon.proper_noun_heuristic,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub fn hop_file_name(hop: u32) -> String {
    format!("hop_{hop}.jsonl")
}

/// Writes `hop_0.jsonl` .. `hop_N.jsonl`, each sorted by sample id.
fn write_hop_files(
    out_dir: &Path,
    rows: &[DatasetRow],
    results: &BTreeMap<String, SampleResult>,
    max_hops: u32,
) -> io::Result<Vec<PathBuf>> {
    let by_id: BTreeMap<&str, &DatasetRow> = rows.iter().map(|r| (r.sample.sample_id.as_str(), r)).collect();
    let mut per_hop: Vec<Vec<Map<String, Value>>> = vec![Vec::new(); max_hops as usize + 1];
    for (id, res) in results {
        let Some(row) = by_id.get(id.as_str()) else { continue };
        for rec in &res.records {
            per_hop[rec.record.hop as usize].push(evolved_row(row, &rec.record));
        }
    }
    let mut paths = Vec::new();
    for (hop, mut hop_rows) in per_hop.into_iter().enumerate() {
        hop_rows.sort_by(|a, b| a["sample_id"].as_str().cmp(&b["sample_id"].as_str()));
        let path = out_dir.join(hop_file_name(hop as u32));
        write_jsonl(&path, &hop_rows)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Evolves every sample of `input` into `out_dir`.
///
/// Finished samples are journaled as they complete; a rerun over the same
/// directory replays the journal and only processes the rest. Outputs are
/// written only once every sample is done.
pub fn evolve_dataset<P: Provider + ?Sized>(
    input: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    provider: &P,
    lexicon: &NounLexicon,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let rows = read_samples(input)?;
    std::fs::create_dir_all(out_dir)?;
    let fp = fingerprint(&file_sha256(input)?, config, lexicon);
    let (journal, mut done) = Journal::open(&out_dir.join(JOURNAL_FILE), &fp, config.restart)?;
    let pending: Vec<&DatasetRow> = rows.iter().filter(|r| !done.contains_key(&r.sample.sample_id)).collect();
    log::info!("{} samples, {} already journaled, {} to process", rows.len(), done.len(), pending.len());

    let evolver = Evolver {
        provider,
        lexicon,
        max_hops: config.max_hops,
        seed: config.seed,
        max_path_len: config.max_path_len,
    };
    let started = AtomicUsize::new(0);
    let fresh: Mutex<Vec<SampleResult>> = Mutex::new(Vec::new());
    let write_error: Mutex<Option<io::Error>> = Mutex::new(None);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().for_each(|row| {
            if let Some(limit) = config.stop_after {
                if started.fetch_add(1, Ordering::SeqCst) >= limit {
                    return;
                }
            }
            let result = evolver.evolve_sample(&row.sample);
            log::debug!("{}: {:?}", result.sample_id, result.status);
            if let Err(e) = journal.append(&result) {
                write_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
            }
            fresh.lock().unwrap_or_else(|p| p.into_inner()).push(result);
        });
    });
    if let Some(e) = write_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e.into());
    }
    let fresh = fresh.into_inner().unwrap_or_else(|p| p.into_inner());
    let processed = fresh.len();
    for r in fresh {
        done.insert(r.sample_id.clone(), r);
    }
    let report = RunReport::build(&done, config.max_hops, config.seed);
    let complete = done.len() == rows.len();
    if complete {
        journal.compact(&done)?;
        write_hop_files(out_dir, &rows, &done, config.max_hops)?;
        std::fs::write(
            out_dir.join(REPORT_JSON),
            serde_json::to_string_pretty(&report).map_err(io::Error::other)? + "\n",
        )?;
        std::fs::write(out_dir.join(REPORT_TEXT), report.to_text())?;
    }
    Ok(RunOutcome {
        report,
        complete,
        processed,
    })
}

/// One line of the extraction-only output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionEntry {
    pub sample_id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphs: Option<SampleGraphs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs extraction only and writes one entry per sample to `out`, sorted by
/// sample id.
pub fn extract_dataset<P: Provider + ?Sized>(
    input: &Path,
    out: &Path,
    provider: &P,
    jobs: usize,
) -> Result<Vec<ExtractionEntry>, RunError> {
    let rows = read_samples(input)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let mut entries: Vec<ExtractionEntry> = pool.install(|| {
        rows.par_iter()
            .map(|row| match extract(&row.sample, provider) {
                Ok(g) => ExtractionEntry {
                    sample_id: row.sample.sample_id.clone(),
                    ok: true,
                    graphs: Some(g),
                    error: None,
                },
                Err(e) => ExtractionEntry {
                    sample_id: row.sample.sample_id.clone(),
                    ok: false,
                    graphs: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    entries.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let objects: Vec<Map<String, Value>> = entries
        .iter()
        .map(|e| match serde_json::to_value(e) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => unreachable!("entries serialize to objects"),
            Err(err) => Err(io::Error::other(err)),
        })
        .collect::<Result<_, _>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(out, &objects)?;
    Ok(entries)
}
