//! Corpus statistics: question and answer length, key subgraph size and
//! relation vocabulary.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{dataset_files, read_objects, text_field, DatasetError};
use crate::eval::hop_label;
use crate::graph::relation_identity;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}:{line}: missing field `{field}`")]
    MissingField { path: PathBuf, line: usize, field: &'static str },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub question_words: f64,
    pub answer_words: f64,
    /// Mean number of key triplets; absent for text-only statistics.
    pub mean_key_size: Option<f64>,
    /// Distinct relation strings over every key triplet in the file.
    pub distinct_relations: Option<usize>,
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Statistics of one JSON-lines file. Without `text_only`, every row must
/// carry `key_triplets`.
pub fn corpus_stats(path: &Path, text_only: bool) -> Result<CorpusStats, StatsError> {
    let rows = read_objects(path)?;
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() }.into());
    }
    let missing = |line, field| StatsError::MissingField {
        path: path.to_path_buf(),
        line,
        field,
    };
    let (mut q, mut a, mut k) = (0usize, 0usize, 0usize);
    let mut relations = HashSet::new();
    for (line, obj) in &rows {
        q += word_count(&text_field(obj, "question").ok_or_else(|| missing(*line, "question"))?);
        a += word_count(&text_field(obj, "answer").ok_or_else(|| missing(*line, "answer"))?);
        if text_only {
            continue;
        }
        let triplets = obj
            .get("key_triplets")
            .and_then(Value::as_array)
            .ok_or_else(|| missing(*line, "key_triplets"))?;
        k += triplets.len();
        for t in triplets {
            let relation = t
                .as_array()
                .filter(|parts| parts.len() >= 3)
                .and_then(|parts| parts[1].as_str())
                .ok_or_else(|| StatsError::Malformed {
                    path: path.to_path_buf(),
                    line: *line,
                    reason: format!("bad triplet {t}"),
                })?;
            relations.insert(relation_identity(relation));
        }
    }
    let n = rows.len() as f64;
    Ok(CorpusStats {
        samples: rows.len(),
        question_words: q as f64 / n,
        answer_words: a as f64 / n,
        mean_key_size: (!text_only).then(|| k as f64 / n),
        distinct_relations: (!text_only).then_some(relations.len()),
    })
}

/// Labelled statistics for a file, or for each `hop_*.jsonl` in a
/// directory (labelled Raw, 1-hop, ...).
pub fn stats_for_path(path: &Path, text_only: bool) -> Result<Vec<(String, CorpusStats)>, StatsError> {
    if !path.is_dir() {
        let label = path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![(label, corpus_stats(path, text_only)?)]);
    }
    dataset_files(path)?
        .into_iter()
        .map(|p| {
            let hop = p
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("hop_"))
                .and_then(|h| h.parse().ok())
                .unwrap_or(0);
            Ok((hop_label(hop), corpus_stats(&p, text_only)?))
        })
        .collect()
}

/// Aligned table with one column per dataset.
pub fn stats_table(columns: &[(String, CorpusStats)]) -> String {
    let width = columns.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(7);
    let mut s = String::new();
    let _ = write!(s, "{:<14}", "");
    for (label, _) in columns {
        let _ = write!(s, "  {label:>width$}");
    }
    s.push('\n');
    let mut row = |name: &str, cell: &dyn Fn(&CorpusStats) -> String| {
        let _ = write!(s, "{name:<14}");
        for (_, c) in columns {
            let _ = write!(s, "  {:>width$}", cell(c));
        }
        s.push('\n');
    };
    row("Samples", &|c| c.samples.to_string());
    row("Question Words", &|c| format!("{:.2}", c.question_words));
    row("Answer Words", &|c| format!("{:.2}", c.answer_words));
    row("|E_K|", &|c| c.mean_key_size.map_or("-".into(), |k| format!("{k:.2}")));
    row("All Relations", &|c| c.distinct_relations.map_or("-".into(), |r| r.to_string()));
    s
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn write(lines: &[Value]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
        (dir, p)
    }

    #[test]
    fn single_question() {
        let (_d, p) = write(&[serde_json::json!({"question": "What is this?", "answer": "a cat", "key_triplets": [["IMAGE", "depict", "CAT", "V"]]})]);
        let s = corpus_stats(&p, false).unwrap();
        assert_eq!(s.question_words, 3.0);
        assert_eq!(s.answer_words, 2.0);
        assert_eq!(s.mean_key_size, Some(1.0));
        assert_eq!(s.distinct_relations, Some(1));
    }

    #[test]
    fn relations_are_case_insensitive() {
        let (_d, p) = write(&[
            serde_json::json!({"question": "q", "answer": "a", "key_triplets": [["A", "Is On", "B", "V"], ["B", "is on ", "C", "T"]]}),
            serde_json::json!({"question": "q", "answer": "a", "key_triplets": [["A", "has", "B", "V"]]}),
        ]);
        let s = corpus_stats(&p, false).unwrap();
        assert_eq!(s.distinct_relations, Some(2));
        assert_eq!(s.mean_key_size, Some(1.5));
    }

    #[test]
    fn raw_file_needs_triplets_unless_text_only() {
        let (_d, p) = write(&[serde_json::json!({"question": "q r", "answer": "a"})]);
        assert!(matches!(corpus_stats(&p, false), Err(StatsError::MissingField { field: "key_triplets", .. })));
        let s = corpus_stats(&p, true).unwrap();
        assert_eq!((s.question_words, s.mean_key_size), (2.0, None));
    }

    #[test]
    fn empty_file_is_an_error() {
        let (_d, p) = write(&[]);
        assert!(matches!(corpus_stats(&p, true), Err(StatsError::Dataset(DatasetError::Empty { .. }))));
    }

    #[test]
    fn table_rows() {
        let (_d, p) = write(&[serde_json::json!({"question": "What is this?", "answer": "cat", "key_triplets": []})]);
        let table = stats_table(&[("Raw".into(), corpus_stats(&p, false).unwrap())]);
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("Question Words") && lines[2].ends_with("3.00"));
        assert!(lines[5].starts_with("All Relations") && lines[5].ends_with(" 0"));
    }

    proptest! {
        #[test]
        fn matches_oracles_and_ignores_order(
            rows in prop::collection::vec(
                ("[a-z ]{0,30}", "[a-zA-Z ]{1,10}", prop::collection::vec("[a-cA-C]{1,2}", 0..4)),
                1..12,
            ),
            rotate in 0usize..12,
        ) {
            let to_json = |rows: &[(String, String, Vec<String>)]| -> Vec<Value> {
                rows.iter().map(|(q, a, rels)| serde_json::json!({
                    "question": q, "answer": a,
                    "key_triplets": rels.iter().map(|r| vec!["S", r.as_str(), "O", "V"]).collect::<Vec<_>>(),
                })).collect()
            };
            let (_d, p) = write(&to_json(&rows));
            let s = corpus_stats(&p, false).unwrap();
            let n = rows.len() as f64;
            let q: usize = rows.iter().map(|(q, _, _)| q.split(' ').filter(|w| !w.is_empty()).count()).sum();
            let a: usize = rows.iter().map(|(_, a, _)| a.split(' ').filter(|w| !w.is_empty()).count()).sum();
            let k: usize = rows.iter().map(|(_, _, r)| r.len()).sum();
            let rels: std::collections::BTreeSet<String> = rows.iter().flat_map(|(_, _, r)| r.iter().map(|x| x.to_lowercase())).collect();
            prop_assert!((s.question_words - q as f64 / n).abs() < 1e-12);
            prop_assert!((s.answer_words - a as f64 / n).abs() < 1e-12);
            prop_assert!((s.mean_key_size.unwrap() - k as f64 / n).abs() < 1e-12);
            prop_assert_eq!(s.distinct_relations, Some(rels.len()));

            let mut shuffled = rows.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rotate % len);
            shuffled.reverse();
            let (_d2, p2) = write(&to_json(&shuffled));
            prop_assert_eq!(corpus_stats(&p2, false).unwrap().distinct_relations, s.distinct_relations);
        }
    }
}
