//! Accuracy of a model's responses over an evolved dataset, decided by the
//! judging prompt.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataset::{dataset_files, read_objects, text_field, DatasetError};
use crate::prompts::{render_prompt, PromptKind};
use crate::provider::{Provider, ProviderError, ProviderFailure, ProviderRequest, RequestContext};

pub const DEFAULT_MAX_RESPONSE_WORDS: usize = 50;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Responses are cut to this many words before judging; 0 disables.
    pub max_response_words: usize,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_response_words: DEFAULT_MAX_RESPONSE_WORDS,
            jobs: 1,
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Keeps the first `n` whitespace-separated words.
pub fn truncate_words(s: &str, n: usize) -> String {
    if n == 0 {
        return s.trim().to_string();
    }
    s.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Strict judgment parse: only a bare "Yes" counts, allowing surrounding
/// quotes, a trailing period and any letter case.
pub fn parse_judgment(text: &str) -> bool {
    let t = text.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
    let t = t.strip_suffix('.').unwrap_or(t);
    t.eq_ignore_ascii_case("yes")
}

/// Whether `response` matches `answer`.
///
/// Strings equal up to case and whitespace match without asking the
/// provider.
pub fn judge(
    response: &str,
    answer: &str,
    image_ref: Option<&str>,
    provider: &dyn Provider,
) -> Result<bool, ProviderError> {
    if normalize(response) == normalize(answer) {
        return Ok(true);
    }
    // A blank response cannot fill the template and cannot match.
    if response.trim().is_empty() {
        return Ok(false);
    }
    let prompt = render_prompt(PromptKind::Judge, &[("Response", response), ("Answer", answer)])
        .map_err(|e| ProviderError::new(PromptKind::Judge, ProviderFailure::Config(e.to_string())))?;
    let request = ProviderRequest::new(PromptKind::Judge, prompt, image_ref).with_context(RequestContext {
        response: Some(response.to_string()),
        answer: Some(answer.to_string()),
        ..RequestContext::default()
    });
    Ok(parse_judgment(&provider.complete(&request)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "detail")]
pub enum Outcome {
    Correct,
    Incorrect,
    /// No response for this sample; counted as incorrect.
    Missing,
    /// The judge failed; left out of the accuracy.
    Unjudged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleJudgment {
    pub sample_id: String,
    pub hop: u32,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopAccuracy {
    pub hop: u32,
    pub label: String,
    pub samples: usize,
    pub correct: usize,
    pub missing: usize,
    pub unjudged: usize,
    /// Percentage correct among judged samples; `None` when nothing was
    /// judged.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub max_response_words: usize,
    pub hops: Vec<HopAccuracy>,
    pub judgments: Vec<SampleJudgment>,
}

pub fn hop_label(hop: u32) -> String {
    if hop == 0 {
        "Raw".into()
    } else {
        format!("{hop}-hop")
    }
}

struct Item {
    sample_id: String,
    hop: u32,
    answer: String,
    image: Option<String>,
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> EvalError {
    EvalError::Malformed {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn read_items(path: &Path) -> Result<Vec<Item>, EvalError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for file in dataset_files(path)? {
        for (line, obj) in read_objects(&file)? {
            let field = |name: &str| text_field(&obj, name).ok_or_else(|| malformed(&file, line, format!("missing string field `{name}`")));
            let sample_id = field("sample_id")?;
            let answer = field("answer")?;
            let hop = match obj.get("hop") {
                None => 0,
                Some(v) => v
                    .as_u64()
                    .and_then(|h| u32::try_from(h).ok())
                    .ok_or_else(|| malformed(&file, line, "`hop` must be a non-negative integer"))?,
            };
            if !seen.insert(sample_id.clone()) {
                return Err(DatasetError::DuplicateId { path: file, id: sample_id }.into());
            }
            items.push(Item {
                sample_id,
                hop,
                answer,
                image: text_field(&obj, "image"),
            });
        }
    }
    Ok(items)
}

/// `sample_id -> response`. Later duplicates are an error.
pub fn read_responses(path: &Path) -> Result<HashMap<String, String>, EvalError> {
    let mut out = HashMap::new();
    for (line, obj) in read_objects(path)? {
        let id = text_field(&obj, "sample_id").ok_or_else(|| malformed(path, line, "missing `sample_id`"))?;
        let response = match obj.get("response") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => other.to_string(),
        };
        if out.insert(id.clone(), response).is_some() {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                id,
            }
            .into());
        }
    }
    Ok(out)
}

fn dataset_name(path: &Path) -> String {
    let name = if path.is_dir() { path.file_name() } else { path.file_stem() };
    name.map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

/// Judges every dataset sample against its response and tabulates accuracy
/// per hop.
///
/// `dataset` is a hop file or a directory of `hop_*.jsonl` files; samples
/// are grouped by their `hop` field (absent means raw).
pub fn evaluate(
    dataset: &Path,
    responses: &Path,
    provider: &dyn Provider,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let items = read_items(dataset)?;
    let responses = read_responses(responses)?;
    let judge_one = |item: &Item| {
        let outcome = match responses.get(&item.sample_id) {
            None => Outcome::Missing,
            Some(r) => {
                let r = truncate_words(r, config.max_response_words);
                match judge(&r, &item.answer, item.image.as_deref(), provider) {
                    Ok(true) => Outcome::Correct,
                    Ok(false) => Outcome::Incorrect,
                    Err(e) => {
                        log::warn!("{}: judge failed: {e}", item.sample_id);
                        Outcome::Unjudged(e.to_string())
                    }
                }
            }
        };
        SampleJudgment {
            sample_id: item.sample_id.clone(),
            hop: item.hop,
            outcome,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let mut judgments: Vec<SampleJudgment> = pool.install(|| items.par_iter().map(judge_one).collect());
    judgments.sort_by(|a, b| (a.hop, &a.sample_id).cmp(&(b.hop, &b.sample_id)));

    let mut by_hop: BTreeMap<u32, HopAccuracy> = BTreeMap::new();
    for j in &judgments {
        let h = by_hop.entry(j.hop).or_insert_with(|| HopAccuracy {
            hop: j.hop,
            label: hop_label(j.hop),
            samples: 0,
            correct: 0,
            missing: 0,
            unjudged: 0,
            accuracy: None,
        });
        h.samples += 1;
        match j.outcome {
            Outcome::Correct => h.correct += 1,
            Outcome::Incorrect => {}
            Outcome::Missing => h.missing += 1,
            Outcome::Unjudged(_) => h.unjudged += 1,
        }
    }
    for h in by_hop.values_mut() {
        let judged = h.samples - h.unjudged;
        h.accuracy = (judged > 0).then(|| 100.0 * h.correct as f64 / judged as f64);
    }
    Ok(EvalReport {
        dataset: dataset_name(dataset),
        max_response_words: config.max_response_words,
        hops: by_hop.into_values().collect(),
        judgments,
    })
}

impl EvalReport {
    /// Accuracy table shaped like the usual Raw / 1-hop / 2-hop columns.
    pub fn to_table(&self) -> String {
        let name_width = self.dataset.len().max("unjudged".len());
        let mut s = String::new();
        let _ = write!(s, "{:<name_width$}", "");
        for h in &self.hops {
            let _ = write!(s, "  {:>7}", h.label);
        }
        s.push('\n');
        let mut row = |label: &str, cell: &dyn Fn(&HopAccuracy) -> String| {
            let _ = write!(s, "{label:<name_width$}");
            for h in &self.hops {
                let _ = write!(s, "  {:>7}", cell(h));
            }
            s.push('\n');
        };
        row(&self.dataset, &|h| h.accuracy.map_or("-".into(), |a| format!("{a:.2}")));
        row("samples", &|h| h.samples.to_string());
        row("missing", &|h| h.missing.to_string());
        row("unjudged", &|h| h.unjudged.to_string());
        s
    }

    /// Summary without the per-sample judgments.
    pub fn summary(&self) -> Value {
        let mut m = Map::new();
        m.insert("dataset".into(), self.dataset.clone().into());
        m.insert("max_response_words".into(), self.max_response_words.into());
        m.insert("hops".into(), serde_json::to_value(&self.hops).unwrap_or_default());
        Value::Object(m)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Fixed(&'static str, AtomicUsize);

    impl Provider for Fixed {
        fn complete(&self, r: &ProviderRequest) -> Result<String, ProviderError> {
            assert_eq!(r.kind, PromptKind::Judge);
            self.1.fetch_add(1, Ordering::SeqCst);
            Ok(self.0.to_string())
        }
    }

    fn fixed(s: &'static str) -> Fixed {
        Fixed(s, AtomicUsize::new(0))
    }

    #[test]
    fn normalized_match_skips_provider() {
        let p = fixed("No");
        assert!(judge("Kilt", "kilt", None, &p).unwrap());
        assert!(judge("  red   wine ", "Red Wine", None, &p).unwrap());
        assert_eq!(p.1.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn strict_parse() {
        assert!(judge("a kilt", "kilt", None, &fixed("Yes")).unwrap());
        assert!(!judge("a kilt", "kilt", None, &fixed("It matches.")).unwrap());
        assert!(parse_judgment(" \"Yes.\" "));
        assert!(parse_judgment("yes"));
        assert!(!parse_judgment("Yes, it does"));
        assert!(!parse_judgment("No"));
        assert!(!parse_judgment(""));
    }

    #[test]
    fn prompt_carries_response_and_answer() {
        struct Check;
        impl Provider for Check {
            fn complete(&self, r: &ProviderRequest) -> Result<String, ProviderError> {
                assert!(r.prompt.contains("Response: a tartan skirt\n"));
                assert!(r.prompt.trim_end().ends_with("Answer: kilt"));
                assert_eq!(r.image_ref.as_deref(), Some("img.jpg"));
                Ok("Yes".into())
            }
        }
        assert!(judge("a tartan skirt", "kilt", Some("img.jpg"), &Check).unwrap());
    }

    #[test]
    fn truncation_counts_words() {
        assert_eq!(truncate_words("a  b\nc d", 3), "a b c");
        assert_eq!(truncate_words(" a b ", 0), "a b");
        let long = vec!["w"; 80].join(" ");
        assert_eq!(truncate_words(&long, 50).split(' ').count(), 50);
    }

    fn write(dir: &Path, name: &str, lines: &[Value]) -> PathBuf {
        let p = dir.join(name);
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn missing_counts_wrong_and_unjudged_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write(
            dir.path(),
            "d.jsonl",
            &[
                serde_json::json!({"sample_id": "a", "answer": "kilt", "question": "q"}),
                serde_json::json!({"sample_id": "b", "answer": "dog", "question": "q"}),
                serde_json::json!({"sample_id": "c", "answer": "cat", "question": "q"}),
                serde_json::json!({"sample_id": "d", "answer": "cow", "question": "q"}),
            ],
        );
        let rs = write(
            dir.path(),
            "r.jsonl",
            &[
                serde_json::json!({"sample_id": "a", "response": "Kilt"}),
                serde_json::json!({"sample_id": "b", "response": "a puppy"}),
                serde_json::json!({"sample_id": "c", "response": "a kitten"}),
            ],
        );
        struct Partial;
        impl Provider for Partial {
            fn complete(&self, r: &ProviderRequest) -> Result<String, ProviderError> {
                if r.context.answer.as_deref() == Some("dog") {
                    Err(ProviderError::new(PromptKind::Judge, ProviderFailure::Transport("down".into())))
                } else {
                    Ok("No".into())
                }
            }
        }
        let report = evaluate(&ds, &rs, &Partial, &EvalConfig::default()).unwrap();
        let h = &report.hops[0];
        assert_eq!((h.samples, h.correct, h.missing, h.unjudged), (4, 1, 1, 1));
        // 1 correct out of a, c, d.
        assert_eq!(format!("{:.2}", h.accuracy.unwrap()), "33.33");
        assert_eq!(report.dataset, "d");
        assert!(report.to_table().contains("33.33"));
    }

    #[test]
    fn directory_groups_by_hop() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        std::fs::create_dir(&run).unwrap();
        write(&run, "hop_0.jsonl", &[serde_json::json!({"sample_id": "a", "answer": "x", "hop": 0})]);
        write(
            &run,
            "hop_1.jsonl",
            &[
                serde_json::json!({"sample_id": "a@1", "answer": "y", "hop": 1}),
                serde_json::json!({"sample_id": "b@1", "answer": "z", "hop": 1}),
            ],
        );
        std::fs::write(run.join("report.json"), "{}").unwrap();
        let rs = write(
            dir.path(),
            "r.jsonl",
            &[
                serde_json::json!({"sample_id": "a", "response": "x"}),
                serde_json::json!({"sample_id": "a@1", "response": "y"}),
                serde_json::json!({"sample_id": "b@1", "response": "q"}),
            ],
        );
        let report = evaluate(&run, &rs, &fixed("No"), &EvalConfig { jobs: 3, ..EvalConfig::default() }).unwrap();
        let acc: Vec<_> = report.hops.iter().map(|h| (h.label.as_str(), h.accuracy.unwrap())).collect();
        assert_eq!(acc, [("Raw", 100.0), ("1-hop", 50.0)]);
        let table = report.to_table();
        assert!(table.lines().next().unwrap().contains("Raw    1-hop"));
        assert!(table.contains("100.00"));
        assert!(table.contains("50.00"));
        assert_eq!(report.summary()["hops"][1]["correct"], 1);
    }

    #[test]
    fn duplicate_response_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let rs = write(
            dir.path(),
            "r.jsonl",
            &[
                serde_json::json!({"sample_id": "a", "response": "x"}),
                serde_json::json!({"sample_id": "a", "response": "y"}),
            ],
        );
        assert!(matches!(read_responses(&rs), Err(EvalError::Dataset(DatasetError::DuplicateId { .. }))));
    }
}
