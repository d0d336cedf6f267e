//! Deterministic table-lookup backend.
//!
//! A knowledge base is a TOML document (or a directory of them, merged in
//! file-name order) with these tables:
//!
//! ```toml
//! [defaults]
//! verdict = "yes"                  # representativeness for unlisted triplets
//! judge = "no"                     # judge verdict for unlisted pairs
//! question_template = "What is the {relation} of the thing shown?"
//!
//! [extraction.s001]
//! visual = [["IMAGE", "depict", "HAT"]]
//! textual = [["HAT", "made of", "FELT"]]
//! key = ["V1", "T1"]
//!
//! [knowledge]
//! "HAT" = [["HAT", "worn_by", "COWBOY"]]
//!
//! [[verdict]]
//! triplet = ["HAT", "worn_by", "COWBOY"]
//! verdict = "yes"
//!
//! [expression]
//! "<expression_key of the new key>" = "Who usually wears the thing shown?"
//!
//! [[judge]]
//! response = "a cowboy"
//! answer = "cowboy"
//! verdict = "yes"
//! ```
//!
//! Lookups read the request's [`RequestContext`](super::RequestContext), not
//! the prompt text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Provider, ProviderError, ProviderFailure, ProviderRequest};
use crate::graph::{normalize_entity, Origin, Triplet, TripletKey};
use crate::parse::{serialize_extraction, ParsedExtraction, Verdict};
use crate::prompts::PromptKind;

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KbVerdict {
    Yes,
    No,
}

impl From<KbVerdict> for Verdict {
    fn from(v: KbVerdict) -> Self {
        match v {
            KbVerdict::Yes => Verdict::Yes,
            KbVerdict::No => Verdict::No,
        }
    }
}

type RawTriplet = [String; 3];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Defaults {
    verdict: Option<KbVerdict>,
    judge: Option<KbVerdict>,
    question_template: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractionEntry {
    #[serde(default)]
    visual: Vec<RawTriplet>,
    #[serde(default)]
    textual: Vec<RawTriplet>,
    key: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictEntry {
    triplet: RawTriplet,
    verdict: KbVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgeEntry {
    response: String,
    answer: String,
    verdict: KbVerdict,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    defaults: Option<Defaults>,
    #[serde(default)]
    extraction: BTreeMap<String, ExtractionEntry>,
    #[serde(default)]
    knowledge: BTreeMap<String, Vec<RawTriplet>>,
    #[serde(default)]
    verdict: Vec<VerdictEntry>,
    #[serde(default)]
    expression: BTreeMap<String, String>,
    #[serde(default)]
    judge: Vec<JudgeEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct OfflineKnowledgeBase {
    defaults: Defaults,
    extraction: HashMap<String, ParsedExtraction>,
    knowledge: HashMap<String, Vec<Triplet>>,
    verdicts: HashMap<TripletKey, Verdict>,
    expression: HashMap<String, String>,
    judge: HashMap<(String, String), Verdict>,
}

fn triplet(raw: &RawTriplet, origin: Origin) -> Result<Triplet, KbError> {
    Triplet::new(&raw[0], &raw[1], &raw[2], origin).map_err(|e| KbError::Invalid(format!("{raw:?}: {e}")))
}

fn judge_key(response: &str, answer: &str) -> (String, String) {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    (norm(response), norm(answer))
}

/// Table key for a key subgraph in the `[expression]` table: the first 16
/// hex digits of SHA-256 over `SUBJECT|relation|OBJECT` lines (relations
/// lower-cased), in key order.
pub fn expression_key(key: &[Triplet]) -> String {
    let mut canon = String::new();
    for t in key {
        let k = t.key();
        let _ = writeln!(canon, "{}|{}|{}", k.subject, k.relation, k.object);
    }
    hex::encode(Sha256::digest(canon.as_bytes()))[..16].to_string()
}

fn read_sources(path: &Path) -> Result<Vec<(PathBuf, String)>, KbError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| KbError::Io { path, source }
    };
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(io(path))? {
            let p = entry.map_err(io(path))?.path();
            if p.extension().is_some_and(|e| e == "toml") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    files
        .into_iter()
        .map(|f| {
            let text = std::fs::read_to_string(&f).map_err(io(&f))?;
            Ok((f, text))
        })
        .collect()
}

/// Hash of the documents [`OfflineKnowledgeBase::load`] would read, in the
/// same order. Identifies a knowledge base for run fingerprints.
pub fn source_digest(path: impl AsRef<Path>) -> Result<String, KbError> {
    let mut h = Sha256::new();
    for (file, text) in read_sources(path.as_ref())? {
        let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for part in [name.as_bytes(), text.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
    }
    Ok(hex::encode(h.finalize()))
}

impl OfflineKnowledgeBase {
    pub fn from_toml_str(text: &str) -> Result<Self, KbError> {
        let mut kb = OfflineKnowledgeBase::default();
        kb.merge_str(text, "<inline>")?;
        Ok(kb)
    }

    /// Loads a single document, or every `*.toml` file in a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let mut kb = OfflineKnowledgeBase::default();
        for (file, text) in read_sources(path.as_ref())? {
            kb.merge_str(&text, &file.display().to_string())?;
        }
        Ok(kb)
    }

    fn merge_str(&mut self, text: &str, origin: &str) -> Result<(), KbError> {
        let doc: Document = toml::from_str(text).map_err(|e| KbError::Toml {
            path: origin.to_string(),
            source: e,
        })?;
        let dup = |table: &str, key: &str| KbError::Invalid(format!("{origin}: duplicate {table} entry {key}"));
        if let Some(d) = doc.defaults {
            self.defaults.verdict = d.verdict.or(self.defaults.verdict);
            self.defaults.judge = d.judge.or(self.defaults.judge);
            self.defaults.question_template = d.question_template.or(self.defaults.question_template.take());
        }
        for (id, entry) in doc.extraction {
            let visual = entry
                .visual
                .iter()
                .enumerate()
                .map(|(i, r)| Ok(triplet(r, Origin::Visual)?.with_id(format!("V{}", i + 1))))
                .collect::<Result<Vec<_>, KbError>>()?;
            let textual = entry
                .textual
                .iter()
                .enumerate()
                .map(|(i, r)| Ok(triplet(r, Origin::Textual)?.with_id(format!("T{}", i + 1))))
                .collect::<Result<Vec<_>, KbError>>()?;
            let mut extraction = ParsedExtraction {
                visual,
                textual,
                ..Default::default()
            };
            for label in &entry.key {
                let t = extraction
                    .by_id(label)
                    .cloned()
                    .ok_or_else(|| KbError::Invalid(format!("{origin}: extraction {id}: unknown key id {label}")))?;
                extraction.rationale.push(t);
            }
            if self.extraction.insert(id.clone(), extraction).is_some() {
                return Err(dup("extraction", &id));
            }
        }
        for (subject, raws) in doc.knowledge {
            let ts = raws
                .iter()
                .map(|r| triplet(r, Origin::External))
                .collect::<Result<Vec<_>, _>>()?;
            if self.knowledge.insert(normalize_entity(&subject), ts).is_some() {
                return Err(dup("knowledge", &subject));
            }
        }
        for v in doc.verdict {
            let key = triplet(&v.triplet, Origin::External)?.key();
            if self.verdicts.insert(key, v.verdict.into()).is_some() {
                return Err(dup("verdict", &format!("{:?}", v.triplet)));
            }
        }
        for (hash, question) in doc.expression {
            if self.expression.insert(hash.clone(), question).is_some() {
                return Err(dup("expression", &hash));
            }
        }
        for j in doc.judge {
            if self.judge.insert(judge_key(&j.response, &j.answer), j.verdict.into()).is_some() {
                return Err(dup("judge", &j.response));
            }
        }
        Ok(())
    }

    pub fn extraction(&self, sample_id: &str) -> Option<&ParsedExtraction> {
        self.extraction.get(sample_id)
    }

    pub fn knowledge(&self, subject: &str) -> Option<&[Triplet]> {
        self.knowledge.get(&normalize_entity(subject)).map(Vec::as_slice)
    }

    pub fn verdict(&self, t: &Triplet) -> Option<Verdict> {
        self.verdicts.get(&t.key()).copied().or(self.defaults.verdict.map(Into::into))
    }

    pub fn question_for(&self, key: &[Triplet]) -> Option<String> {
        if let Some(q) = self.expression.get(&expression_key(key)) {
            return Some(q.clone());
        }
        let template = self.defaults.question_template.as_ref()?;
        let relation = key.last()?.relation().replace('_', " ").to_lowercase();
        Some(template.replace("{relation}", &relation))
    }

    pub fn judge_verdict(&self, response: &str, answer: &str) -> Option<Verdict> {
        self.judge
            .get(&judge_key(response, answer))
            .copied()
            .or(self.defaults.judge.map(Into::into))
    }

    fn respond(&self, request: &ProviderRequest) -> Result<String, ProviderFailure> {
        let ctx = &request.context;
        let need = |field: &str| ProviderFailure::MissingEntry(format!("request carries no {field}"));
        match request.kind {
            PromptKind::Extract | PromptKind::KeySelect => {
                let id = ctx.sample_id.as_deref().ok_or_else(|| need("sample id"))?;
                let ex = self
                    .extraction(id)
                    .ok_or_else(|| ProviderFailure::MissingEntry(format!("no extraction for sample {id}")))?;
                Ok(if request.kind == PromptKind::Extract {
                    serialize_extraction(ex)
                } else {
                    key_listing(&ex.rationale)
                })
            }
            PromptKind::GenerateKnowledge => {
                let subject = ctx.subject.as_deref().ok_or_else(|| need("subject"))?;
                let ts = self
                    .knowledge(subject)
                    .ok_or_else(|| ProviderFailure::MissingEntry(format!("no knowledge for {}", normalize_entity(subject))))?;
                Ok(ts.iter().map(|t| format!("{t}\n")).collect())
            }
            PromptKind::RepresentativeFilter => {
                let mut out = String::new();
                for (i, t) in ctx.triplets.iter().enumerate() {
                    let v = self
                        .verdict(t)
                        .ok_or_else(|| ProviderFailure::MissingEntry(format!("no verdict for {t}")))?;
                    let _ = writeln!(out, "{}.{v}", i + 1);
                }
                Ok(out)
            }
            PromptKind::ExpressQuestion => self
                .question_for(&ctx.triplets)
                .ok_or_else(|| ProviderFailure::MissingEntry(format!("no question for key {}", expression_key(&ctx.triplets)))),
            PromptKind::Judge => {
                let response = ctx.response.as_deref().ok_or_else(|| need("response"))?;
                let answer = ctx.answer.as_deref().ok_or_else(|| need("answer"))?;
                self.judge_verdict(response, answer)
                    .map(|v| v.to_string())
                    .ok_or_else(|| ProviderFailure::MissingEntry(format!("no judgment for {response:?} vs {answer:?}")))
            }
        }
    }
}

/// Key triplets in the key-selection output layout, keeping their labels.
fn key_listing(key: &[Triplet]) -> String {
    let section = |visual: bool| -> Vec<String> {
        key.iter()
            .filter(|t| (t.origin() == Origin::Visual) == visual)
            .map(|t| format!("{}: {t}", t.id().unwrap_or("?")))
            .collect()
    };
    let mut blocks = Vec::new();
    for (header, lines) in [("visual_triplets_list:", section(true)), ("textual_triplets_list:", section(false))] {
        if !lines.is_empty() {
            blocks.push(format!("{header}\n\n{}", lines.join("\n\n")));
        }
    }
    blocks.join("\n\n") + "\n"
}

impl Provider for OfflineKnowledgeBase {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        self.respond(request).map_err(|f| ProviderError::new(request.kind, f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_bare_triplets, parse_labeled_triplets, parse_verdicts};
    use crate::provider::RequestContext;

    const KB: &str = r#"
[defaults]
question_template = "What is the {relation} of the thing shown?"

[extraction.cat]
visual = [["IMAGE", "contains", "CAT"], ["CAT", "color", "WHITE"]]
textual = [["CAT", "is a", "MAMMAL"], ["MAMMAL", "has", "FUR"], ["CAT", "usually have", "26 TEETH"]]
key = ["V1", "T3"]

[knowledge]
duck = [["DUCK", "typical_habitat", "WATER"], ["DUCK", "taxonomic_class", "AVES"]]

[[verdict]]
triplet = ["TRACK", "primary_use", "TRANSPORTATION"]
verdict = "no"

[[verdict]]
triplet = ["CLOTH", "typical_use", "UPHOLSTERY"]
verdict = "yes"

[[judge]]
response = "It matches."
answer = "kilt"
verdict = "no"
"#;

    fn kb() -> OfflineKnowledgeBase {
        OfflineKnowledgeBase::from_toml_str(KB).unwrap()
    }

    fn request(kind: PromptKind, ctx: RequestContext) -> ProviderRequest {
        ProviderRequest::new(kind, "prompt", None).with_context(ctx)
    }

    fn t(s: &str, r: &str, o: &str) -> Triplet {
        Triplet::new(s, r, o, Origin::External).unwrap()
    }

    #[test]
    fn extraction_round_trips_through_the_parser() {
        let ctx = RequestContext {
            sample_id: Some("cat".into()),
            ..Default::default()
        };
        let text = kb().complete(&request(PromptKind::Extract, ctx.clone())).unwrap();
        let parsed = parse_labeled_triplets(&text).unwrap();
        assert_eq!(parsed.visual.len(), 2);
        assert_eq!(parsed.textual.len(), 3);
        assert_eq!(parsed.rationale_ids(), ["V1", "T3"]);

        let keys = kb().complete(&request(PromptKind::KeySelect, ctx)).unwrap();
        assert!(keys.contains("T3: (CAT, usually have, 26 TEETH)"), "{keys}");
        let parsed = parse_labeled_triplets(&keys).unwrap();
        assert_eq!(parsed.visual.len() + parsed.textual.len(), 2);
    }

    #[test]
    fn knowledge_lookup_normalizes_subject() {
        let ctx = RequestContext {
            subject: Some(" Duck ".into()),
            ..Default::default()
        };
        let text = kb().complete(&request(PromptKind::GenerateKnowledge, ctx)).unwrap();
        let bare = parse_bare_triplets(&text).unwrap();
        assert_eq!(bare.triplets[0], t("DUCK", "typical_habitat", "WATER"));
    }

    #[test]
    fn unknown_subject_is_generate_knowledge_error() {
        let ctx = RequestContext {
            subject: Some("ZEBRA".into()),
            ..Default::default()
        };
        let err = kb().complete(&request(PromptKind::GenerateKnowledge, ctx)).unwrap_err();
        assert_eq!(err.kind, PromptKind::GenerateKnowledge);
        assert!(matches!(err.failure, ProviderFailure::MissingEntry(_)));
    }

    #[test]
    fn verdicts_come_from_the_table() {
        let ctx = RequestContext {
            triplets: vec![t("TRACK", "primary_use", "TRANSPORTATION"), t("cloth", "typical_use", "upholstery")],
            ..Default::default()
        };
        let text = kb().complete(&request(PromptKind::RepresentativeFilter, ctx)).unwrap();
        assert_eq!(parse_verdicts(&text, 2).values(), [Verdict::No, Verdict::Yes]);
        let unknown = RequestContext {
            triplets: vec![t("A", "b", "C")],
            ..Default::default()
        };
        assert!(kb().complete(&request(PromptKind::RepresentativeFilter, unknown)).is_err());
    }

    #[test]
    fn expression_prefers_table_over_template() {
        let key = vec![t("SCOTLAND", "traditional_clothing", "KILT")];
        assert_eq!(
            kb().question_for(&key).unwrap(),
            "What is the traditional clothing of the thing shown?"
        );
        let doc = format!(
            "{KB}\n[expression]\n\"{}\" = \"What is the traditional clothing of the country shown in this image?\"\n",
            expression_key(&key)
        );
        let kb2 = OfflineKnowledgeBase::from_toml_str(&doc).unwrap();
        assert_eq!(
            kb2.question_for(&key).unwrap(),
            "What is the traditional clothing of the country shown in this image?"
        );
    }

    #[test]
    fn judge_table_and_missing_default() {
        assert_eq!(kb().judge_verdict("It  matches.", "Kilt"), Some(Verdict::No));
        assert_eq!(kb().judge_verdict("kilt", "kilt"), None);
    }

    #[test]
    fn directory_documents_merge_and_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "[knowledge]\nDUCK = [[\"DUCK\", \"is\", \"BIRD\"]]\n").unwrap();
        std::fs::write(dir.path().join("b.toml"), "[defaults]\nverdict = \"yes\"\n").unwrap();
        let kb = OfflineKnowledgeBase::load(dir.path()).unwrap();
        assert!(kb.knowledge("duck").is_some());
        assert_eq!(kb.verdict(&t("X", "y", "Z")), Some(Verdict::Yes));
        std::fs::write(dir.path().join("c.toml"), "[knowledge]\nduck = []\n").unwrap();
        assert!(matches!(OfflineKnowledgeBase::load(dir.path()), Err(KbError::Invalid(_))));
    }

    #[test]
    fn digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "[defaults]\nverdict = \"yes\"\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let first = source_digest(dir.path()).unwrap();
        assert_eq!(first, source_digest(dir.path()).unwrap());
        std::fs::write(dir.path().join("notes.txt"), "still ignored").unwrap();
        assert_eq!(first, source_digest(dir.path()).unwrap());
        std::fs::write(dir.path().join("a.toml"), "[defaults]\nverdict = \"no\"\n").unwrap();
        assert_ne!(first, source_digest(dir.path()).unwrap());
    }

    #[test]
    fn bad_key_id_is_rejected() {
        let doc = "[extraction.x]\nvisual = [[\"IMAGE\", \"has\", \"A\"]]\nkey = [\"V2\"]\n";
        assert!(OfflineKnowledgeBase::from_toml_str(doc).is_err());
    }

    #[test]
    fn lookups_are_pure() {
        let kb = kb();
        let ctx = RequestContext {
            subject: Some("duck".into()),
            ..Default::default()
        };
        let req = request(PromptKind::GenerateKnowledge, ctx);
        let first = kb.complete(&req).unwrap();
        for _ in 0..5 {
            assert_eq!(kb.complete(&req).unwrap(), first);
        }
    }
}
