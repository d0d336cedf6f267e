//! JSON-lines datasets: input samples, evolved hop records and responses.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::graph::{EvolutionRecord, Origin, Triplet, VqaSample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{path}: duplicate sample_id {id:?}")]
    DuplicateId { path: PathBuf, id: String },
    #[error("{path}: no records")]
    Empty { path: PathBuf },
}

/// Fields written by the evolution pipeline; input fields with these names
/// are overwritten.
pub const EVOLVED_FIELDS: [&str; 9] = [
    "sample_id",
    "image",
    "question",
    "answer",
    "hop",
    "lineage_id",
    "reselected",
    "added_triplet",
    "key_triplets",
];

/// One input sample plus any extra fields, kept in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub sample: VqaSample,
    pub extra: Map<String, Value>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A JSON object with the 1-based line it came from.
pub type NumberedObject = (usize, Map<String, Value>);

/// Every non-blank line of a JSON-lines file as an object.
pub fn read_objects(path: &Path) -> Result<Vec<NumberedObject>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => out.push((i + 1, map)),
            Ok(_) => return Err(malformed("expected a JSON object".into())),
            Err(e) => return Err(malformed(e.to_string())),
        }
    }
    Ok(out)
}

/// A string field, accepting integers for ids.
pub fn text_field(obj: &Map<String, Value>, name: &str) -> Option<String> {
    match obj.get(name)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) if name == "sample_id" => Some(n.to_string()),
        _ => None,
    }
}

/// Reads input samples: `sample_id`, `image`, `question`, `answer`, plus
/// passthrough fields. Ids must be unique.
pub fn read_samples(path: &Path) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, mut obj) in read_objects(path)? {
        let mut field = |name: &str| {
            let value = text_field(&obj, name).ok_or_else(|| DatasetError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: format!("missing string field `{name}`"),
            })?;
            obj.remove(name);
            Ok::<_, DatasetError>(value)
        };
        let sample = VqaSample {
            sample_id: field("sample_id")?,
            image_ref: field("image")?,
            question: field("question")?,
            answer: field("answer")?,
        };
        if !sample.is_well_formed() {
            return Err(DatasetError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: "sample_id, question and answer must be non-empty".into(),
            });
        }
        if !seen.insert(sample.sample_id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                id: sample.sample_id,
            });
        }
        rows.push(DatasetRow { sample, extra: obj });
    }
    Ok(rows)
}

/// `[subject, relation, object, origin]`
pub fn triplet_json(t: &Triplet) -> Value {
    Value::from(vec![t.subject(), t.relation(), t.object(), t.origin().as_str()])
}

/// Inverse of [`triplet_json`].
pub fn triplet_from_json(value: &Value) -> Option<Triplet> {
    let parts = value.as_array()?;
    if parts.len() != 4 {
        return None;
    }
    let s: Vec<&str> = parts.iter().map(Value::as_str).collect::<Option<_>>()?;
    let origin: Origin = s[3].parse().ok()?;
    Triplet::new(s[0], s[1], s[2], origin).ok()
}

/// Dataset id of a record: the original id at hop 0, `id@h` afterwards.
pub fn evolved_id(base: &str, hop: u32) -> String {
    if hop == 0 {
        base.to_string()
    } else {
        format!("{base}@{hop}")
    }
}

/// Output row for one evolution record of `row`.
pub fn evolved_row(row: &DatasetRow, record: &EvolutionRecord) -> Map<String, Value> {
    let mut out = Map::new();
    out.insert("sample_id".into(), evolved_id(&row.sample.sample_id, record.hop).into());
    out.insert("image".into(), row.sample.image_ref.clone().into());
    out.insert("question".into(), record.question.clone().into());
    out.insert("answer".into(), record.answer.clone().into());
    out.insert("hop".into(), record.hop.into());
    out.insert("lineage_id".into(), row.sample.sample_id.clone().into());
    out.insert("reselected".into(), record.reselected.into());
    let added = if record.hop == 0 {
        Value::Null
    } else {
        record.last_added().map_or(Value::Null, triplet_json)
    };
    out.insert("added_triplet".into(), added);
    out.insert(
        "key_triplets".into(),
        Value::Array(record.key.iter().map(triplet_json).collect()),
    );
    for (k, v) in &row.extra {
        if !EVOLVED_FIELDS.contains(&k.as_str()) {
            out.insert(k.clone(), v.clone());
        }
    }
    out
}

/// Writes objects one per line, replacing `path` atomically.
pub fn write_jsonl<'a, I>(path: &Path, rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = &'a Map<String, Value>>,
{
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = io::BufWriter::new(File::create(&tmp)?);
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)
}

/// `path` itself, or the `hop_*.jsonl` files of a run directory in hop
/// order.
pub fn dataset_files(path: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut hops: Vec<(u32, PathBuf)> = std::fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| {
            let p = e.ok()?.path();
            let hop = p.file_name()?.to_str()?.strip_prefix("hop_")?.strip_suffix(".jsonl")?.parse().ok()?;
            Some((hop, p))
        })
        .collect();
    hops.sort();
    if hops.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    Ok(hops.into_iter().map(|(_, p)| p).collect())
}

/// A uniform sample of `k` rows without replacement, kept in input order.
/// Asking for more rows than exist returns them all.
pub fn sample_rows<T: Clone>(rows: &[T], k: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, rows.len(), k.min(rows.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("in.jsonl");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn reads_samples_with_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"sample_id\": 7, \"image\": \"a.jpg\", \"question\": \"Q?\", \"answer\": \"duck\", \"split\": \"val\"}\n\n",
        );
        let rows = read_samples(&p).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sample.sample_id, "7");
        assert_eq!(rows[0].extra["split"], "val");
        assert!(!rows[0].extra.contains_key("answer"));
    }

    #[test]
    fn malformed_and_duplicate_inputs_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "{\"sample_id\": \"a\", \"image\": \"x\", \"question\": \"q\"}\n");
        assert!(matches!(read_samples(&p), Err(DatasetError::Malformed { line: 1, .. })));
        let p = write(dir.path(), "[1]\n");
        assert!(matches!(read_samples(&p), Err(DatasetError::Malformed { .. })));
        let line = "{\"sample_id\": \"a\", \"image\": \"x\", \"question\": \"q\", \"answer\": \"b\"}\n";
        let p = write(dir.path(), &line.repeat(2));
        assert!(matches!(read_samples(&p), Err(DatasetError::DuplicateId { .. })));
    }

    #[test]
    fn triplet_json_round_trips() {
        let t = Triplet::new("CAT", "usually have", "26 TEETH", Origin::Textual).unwrap();
        assert_eq!(triplet_json(&t).to_string(), r#"["CAT","usually have","26 TEETH","textual"]"#);
        assert_eq!(triplet_from_json(&triplet_json(&t)), Some(t));
        assert_eq!(triplet_from_json(&Value::from(vec!["a", "b", "c"])), None);
    }

    #[test]
    fn evolved_rows_carry_lineage() {
        let row = DatasetRow {
            sample: VqaSample::new("s1", "i.jpg", "q", "a"),
            extra: [("hop".to_string(), Value::from("x")), ("note".to_string(), Value::from(1))]
                .into_iter()
                .collect(),
        };
        let added = Triplet::new("A", "r", "B", Origin::External).unwrap();
        let rec = EvolutionRecord {
            base_sample_id: "s1".into(),
            hop: 2,
            added_triplets: vec![added.clone(), added.clone()],
            reselected: false,
            question: "q2".into(),
            answer: "B".into(),
            key: vec![added],
        };
        let out = evolved_row(&row, &rec);
        assert_eq!(out["sample_id"], "s1@2");
        assert_eq!(out["hop"], 2);
        assert_eq!(out["lineage_id"], "s1");
        assert_eq!(out["note"], 1);
        assert_eq!(out["added_triplet"][2], "B");
    }

    #[test]
    fn run_directory_lists_hops_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["hop_10.jsonl", "hop_2.jsonl", "hop_0.jsonl", "report.json", "journal.jsonl"] {
            std::fs::write(dir.path().join(name), "").unwrap();
        }
        let names: Vec<_> = dataset_files(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["hop_0.jsonl", "hop_2.jsonl", "hop_10.jsonl"]);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(dataset_files(empty.path()), Err(DatasetError::Empty { .. })));
    }

    #[test]
    fn review_sample_is_seeded_and_ordered() {
        let rows: Vec<u32> = (0..100).collect();
        let a = sample_rows(&rows, 10, 3);
        assert_eq!(a, sample_rows(&rows, 10, 3));
        assert_ne!(a, sample_rows(&rows, 10, 4));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_rows(&rows[..5], 10, 3), [0, 1, 2, 3, 4]);
    }
}
