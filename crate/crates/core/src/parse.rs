//! Readers and writers for the line grammars exchanged with knowledge
//! providers.
//!
//! Three shapes of output come back from providers:
//!
//! * labeled triplets, `V1.(Image, contains, motorcycle)` or
//!   `T3: (CAT, usually have, 26 TEETH)`, grouped under section headers;
//! * bare triplets, `(DUCK, taxonomic_class, AVES)`, one per line;
//! * numbered verdicts, `1.No` / `2.Yes`.
//!
//! The parsers are tolerant: anything that does not match is recorded as a
//! [`Diagnostic`] and skipped. Fields are comma separated with no escaping,
//! so commas and parentheses inside a field make the line unparseable.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Origin, Triplet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no triplets could be parsed ({diagnostics} unparseable lines)")]
    EmptyExtraction { diagnostics: usize },
    #[error("cannot serialize an empty key triplet list")]
    EmptyKey,
}

/// A skipped input line and why it was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {} ({:?})", self.line, self.reason, self.text)
    }
}

/// Output of the graph-extraction grammar.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedExtraction {
    pub visual: Vec<Triplet>,
    pub textual: Vec<Triplet>,
    /// Entries of the answer-rationale (key) section, with their labels.
    pub rationale: Vec<Triplet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedExtraction {
    pub fn rationale_ids(&self) -> Vec<&str> {
        self.rationale.iter().filter_map(Triplet::id).collect()
    }

    pub fn triplet_count(&self) -> usize {
        self.visual.len() + self.textual.len() + self.rationale.len()
    }

    /// Looks up a visual or textual triplet by its label.
    pub fn by_id(&self, id: &str) -> Option<&Triplet> {
        self.visual
            .iter()
            .chain(&self.textual)
            .find(|t| t.id().is_some_and(|own| own.eq_ignore_ascii_case(id)))
    }
}

/// Output of the bare-triplet grammar.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BareTriplets {
    pub triplets: Vec<Triplet>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn is_yes(self) -> bool {
        self == Verdict::Yes
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
        })
    }
}

/// One verdict per input triplet, indexed from 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerdictList {
    pub verdicts: Vec<(usize, Verdict)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl VerdictList {
    pub fn all(expected: usize, verdict: Verdict) -> Self {
        VerdictList {
            verdicts: (1..=expected).map(|i| (i, verdict)).collect(),
            diagnostics: Vec::new(),
        }
    }

    pub fn get(&self, index: usize) -> Option<Verdict> {
        self.verdicts
            .get(index.checked_sub(1)?)
            .map(|&(_, verdict)| verdict)
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn values(&self) -> Vec<Verdict> {
        self.verdicts.iter().map(|&(_, v)| v).collect()
    }
}

static LABELED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([VvTt])(\d{1,9})\s*[.:]\s*\((.*)\)\s*[.,;]?$").unwrap());
static BARE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:(\d{1,9})\s*[.):]\s*)?\((.*)\)\s*[.,;]?$").unwrap());
static VERDICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(\d{1,9})\s*[.):]?\s*(yes|no)\b").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Visual,
    Textual,
    Rationale,
    /// A header that introduces bare knowledge lines or judgments.
    Other,
}

fn classify_header(line: &str) -> Option<Section> {
    let body = line.trim_end_matches(':').trim().trim_start_matches('#').trim();
    let lower = body.to_ascii_lowercase();
    let section = match lower.as_str() {
        "visual information subgraph"
        | "visual knowledge subgraph"
        | "visual information triplets"
        | "visual information"
        | "visual_triplets_list" => Section::Visual,
        "textual information subgraph"
        | "textual knowledge subgraph"
        | "textual information triplets"
        | "textual information"
        | "textual_triplets_list" => Section::Textual,
        "multimodal answer rationale"
        | "answer rationale"
        | "key information triplets to answer the question"
        | "key information triplets"
        | "key triplets" => Section::Rationale,
        "answer related knowledge triples"
        | "answer related knowledge triplets"
        | "representative judgment"
        | "related triplets" => Section::Other,
        _ => return None,
    };
    line.trim_end().ends_with(':').then_some(section)
}

/// Strips markdown decoration that chat providers wrap around list lines.
fn clean_line(raw: &str) -> Option<&str> {
    let mut line = raw.trim();
    if line.starts_with("```") {
        return None;
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            line = rest.trim_start();
        }
    }
    line = line.trim_matches('`').trim();
    if line.is_empty() {
        None
    } else {
        Some(line)
    }
}

fn unbold(line: &str) -> std::borrow::Cow<'_, str> {
    if line.contains("**") {
        std::borrow::Cow::Owned(line.replace("**", ""))
    } else {
        std::borrow::Cow::Borrowed(line)
    }
}

fn parse_fields(inner: &str, origin: Origin) -> Result<Triplet, String> {
    if inner.contains('(') || inner.contains(')') {
        return Err("parenthesis inside a field".into());
    }
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected 3 comma-separated fields, found {}", parts.len()));
    }
    Triplet::new(parts[0], parts[1], parts[2], origin).map_err(|e| e.to_string())
}

/// Parses labeled `V<n>` / `T<n>` triplet lines grouped under section headers.
pub fn parse_labeled_triplets(text: &str) -> Result<ParsedExtraction, ParseError> {
    let mut out = ParsedExtraction::default();
    let mut section = Section::None;
    let mut last_id: [Option<u64>; 3] = [None; 3];

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(line) = clean_line(raw) else { continue };
        let line = unbold(line);
        let line = line.trim();
        if let Some(next) = classify_header(line) {
            section = next;
            continue;
        }
        let diag = |reason: String| Diagnostic {
            line: line_no,
            text: line.to_string(),
            reason,
        };

        let (origin, label, inner) = if let Some(caps) = LABELED.captures(line) {
            let prefix = caps[1].to_ascii_uppercase();
            let origin = if prefix == "V" { Origin::Visual } else { Origin::Textual };
            let number: u64 = caps[2].parse().unwrap_or(0);
            (origin, Some((prefix, number)), caps.get(3).map_or("", |m| m.as_str()))
        } else if let (Some(caps), Some(origin)) = (
            BARE.captures(line),
            match section {
                Section::Visual => Some(Origin::Visual),
                Section::Textual => Some(Origin::Textual),
                _ => None,
            },
        ) {
            (origin, None, caps.get(2).map_or("", |m| m.as_str()))
        } else {
            out.diagnostics.push(diag("not a labeled triplet".into()));
            continue;
        };

        let mut triplet = match parse_fields(inner, origin) {
            Ok(t) => t,
            Err(reason) => {
                out.diagnostics.push(diag(reason));
                continue;
            }
        };
        if let Some((prefix, number)) = &label {
            triplet = triplet.with_id(format!("{prefix}{number}"));
        }

        let slot = match (section, origin) {
            (Section::Rationale, _) => 2,
            (_, Origin::Visual) => 0,
            _ => 1,
        };
        if slot < 2 {
            if let Some((_, number)) = label {
                if last_id[slot].is_some_and(|prev| number <= prev) {
                    out.diagnostics
                        .push(diag(format!("label number {number} is not increasing")));
                }
                last_id[slot] = Some(number);
            }
        }
        match slot {
            0 => out.visual.push(triplet),
            1 => out.textual.push(triplet),
            _ => out.rationale.push(triplet),
        }
    }

    if !out.visual.is_empty() || !out.textual.is_empty() {
        let known: HashSet<String> = out
            .visual
            .iter()
            .chain(&out.textual)
            .filter_map(|t| t.id().map(str::to_ascii_uppercase))
            .collect();
        for r in &out.rationale {
            if let Some(id) = r.id() {
                if !known.contains(&id.to_ascii_uppercase()) {
                    out.diagnostics.push(Diagnostic {
                        line: 0,
                        text: id.to_string(),
                        reason: "rationale label does not resolve".into(),
                    });
                }
            }
        }
    }

    if out.triplet_count() == 0 {
        return Err(ParseError::EmptyExtraction {
            diagnostics: out.diagnostics.len(),
        });
    }
    Ok(out)
}

/// Parses unlabeled `(s, r, o)` lines. Every triplet is `External`.
pub fn parse_bare_triplets(text: &str) -> Result<BareTriplets, ParseError> {
    let mut out = BareTriplets::default();
    for (idx, raw) in text.lines().enumerate() {
        let Some(line) = clean_line(raw) else { continue };
        let line = unbold(line);
        let line = line.trim();
        if classify_header(line).is_some() {
            continue;
        }
        let parsed = match BARE.captures(line) {
            Some(caps) => parse_fields(caps.get(2).map_or("", |m| m.as_str()), Origin::External),
            None => Err("not a bare triplet".to_string()),
        };
        match parsed {
            Ok(t) => out.triplets.push(t),
            Err(reason) => out.diagnostics.push(Diagnostic {
                line: idx + 1,
                text: line.to_string(),
                reason,
            }),
        }
    }
    if out.triplets.is_empty() {
        return Err(ParseError::EmptyExtraction {
            diagnostics: out.diagnostics.len(),
        });
    }
    Ok(out)
}

/// Reads `<n>.<Yes|No>` lines. Indices that never appear default to `No`.
pub fn parse_verdicts(text: &str, expected: usize) -> VerdictList {
    let mut slots: Vec<Option<Verdict>> = vec![None; expected];
    let mut diagnostics = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let Some(line) = clean_line(raw) else { continue };
        let line = unbold(line);
        let line = line.trim();
        if classify_header(line).is_some() {
            continue;
        }
        let diag = |reason: String| Diagnostic {
            line: idx + 1,
            text: line.to_string(),
            reason,
        };
        let Some(caps) = VERDICT.captures(line) else {
            diagnostics.push(diag("not a numbered verdict".into()));
            continue;
        };
        let verdict = if caps[2].eq_ignore_ascii_case("yes") {
            Verdict::Yes
        } else {
            Verdict::No
        };
        match caps[1].parse::<usize>() {
            Ok(n) if (1..=expected).contains(&n) => {
                if slots[n - 1].is_some() {
                    diagnostics.push(diag(format!("duplicate verdict for {n}")));
                } else {
                    slots[n - 1] = Some(verdict);
                }
            }
            _ => diagnostics.push(diag("verdict index out of range".into())),
        }
    }
    VerdictList {
        verdicts: slots
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i + 1, v.unwrap_or(Verdict::No)))
            .collect(),
        diagnostics,
    }
}

/// `(S, r, O)`
pub fn format_bare(t: &Triplet) -> String {
    t.to_string()
}

/// Labeled lines (`V1: (..)`) numbered by position, joined by blank lines.
pub fn format_labeled(triplets: &[Triplet], prefix: char) -> String {
    triplets
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{prefix}{}: {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Numbered lines (`1.(..)`) for the representativeness prompt.
pub fn format_numbered(triplets: &[Triplet]) -> String {
    triplets
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}.{t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders a key list as the `visual_triplets_list:` /
/// `textual_triplets_list:` block used by the question-generation prompt.
///
/// Visual triplets get `V` labels and everything else `T` labels, both
/// numbered in list order. Empty sections are omitted.
pub fn serialize_key_triplets(key: &[Triplet]) -> Result<String, ParseError> {
    if key.is_empty() {
        return Err(ParseError::EmptyKey);
    }
    let (visual, textual): (Vec<Triplet>, Vec<Triplet>) =
        key.iter().cloned().partition(|t| t.origin() == Origin::Visual);
    let mut blocks = Vec::new();
    if !visual.is_empty() {
        blocks.push(format!("visual_triplets_list:\n\n{}", format_labeled(&visual, 'V')));
    }
    if !textual.is_empty() {
        blocks.push(format!("textual_triplets_list:\n\n{}", format_labeled(&textual, 'T')));
    }
    Ok(blocks.join("\n\n"))
}

/// Renders an extraction in the graph-extraction output layout.
pub fn serialize_extraction(extraction: &ParsedExtraction) -> String {
    let dotted = |ts: &[Triplet], prefix: char| -> String {
        ts.iter()
            .enumerate()
            .map(|(i, t)| {
                let label = t
                    .id()
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("{prefix}{}", i + 1));
                format!("{label}.{t}")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    let rationale = extraction
        .rationale
        .iter()
        .map(|t| {
            let label = t.id().map(str::to_string).unwrap_or_else(|| {
                format!("{}?", t.origin().label_prefix())
            });
            format!("{label}.{t}")
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    format!(
        "Visual Information Subgraph:\n\n{}\n\n\nTextual Information Subgraph:\n\n{}\n\nMultimodal Answer Rationale:\n\n{}\n",
        dotted(&extraction.visual, 'V'),
        dotted(&extraction.textual, 'T'),
        rationale
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn labeled_dot_form() {
        let p = parse_labeled_triplets("V1.(Image, contains, motorcycle)").unwrap();
        assert_eq!(p.visual.len(), 1);
        let t = &p.visual[0];
        assert_eq!(t.id(), Some("V1"));
        assert_eq!((t.subject(), t.relation(), t.object()), ("IMAGE", "contains", "MOTORCYCLE"));
        assert_eq!(t.origin(), Origin::Visual);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            parse_labeled_triplets(""),
            Err(ParseError::EmptyExtraction { diagnostics: 0 })
        );
        assert!(parse_bare_triplets("").is_err());
    }

    const GRAPH_EXTRACTION_EXAMPLE: &str = "Visual Information Subgraph:

V1.(Image, contains, motorcycle)

V2.(motorcycle, has color, black)

V3.(motorcycle, has component, engine)

V4.(motorcycle, has feature, two wheels)

V5.(motorcycle, is on, road or track)


Textual Information Subgraph:

T1.(motorcycle, can be used for, race)

T2.(sport, has type, race)

T3.(race, requires, high speed vehicle)

T4.(high speed vehicle, includes, motorcycle)

Multimodal Answer Rationale:

V1.(Image, contains, motorcycle)

T1.(motorcycle, can be used for, race)

T2.(sport, has type, race)";

    #[test]
    fn full_graph_extraction_example() {
        let p = parse_labeled_triplets(GRAPH_EXTRACTION_EXAMPLE).unwrap();
        assert_eq!(p.visual.len(), 5);
        assert_eq!(p.textual.len(), 4);
        assert_eq!(p.rationale_ids(), ["V1", "T1", "T2"]);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(p.by_id("t3").unwrap().object(), "HIGH SPEED VEHICLE");
    }

    #[test]
    fn colon_separator_and_fences() {
        let text = "```\nKey information triplets to answer the question:\nV1: (IMAGE, depict, CAT)\nT3: (CAT, usually have, 26 TEETH)\n```";
        let p = parse_labeled_triplets(text).unwrap();
        assert_eq!(p.rationale_ids(), ["V1", "T3"]);
        assert_eq!(p.rationale[1].origin(), Origin::Textual);
    }

    #[test]
    fn prose_and_bad_arity_become_diagnostics() {
        let text = "Sure! Here you go:\nV1.(IMAGE, depict, MAN)\nV2.(MAN, wear, HAT, RED)\nV3.(MAN, holds (left), CUP)";
        let p = parse_labeled_triplets(text).unwrap();
        assert_eq!(p.visual.len(), 1);
        assert_eq!(p.diagnostics.len(), 3);
    }

    #[test]
    fn non_increasing_labels_are_flagged() {
        let p = parse_labeled_triplets("V2.(A, r, B)\nV1.(B, r, C)").unwrap();
        assert_eq!(p.visual.len(), 2);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn unresolved_rationale_label() {
        let text = "Visual Information Subgraph:\nV1.(IMAGE, depict, CAT)\nMultimodal Answer Rationale:\nT9.(CAT, r, DOG)";
        let p = parse_labeled_triplets(text).unwrap();
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].reason, "rationale label does not resolve");
    }

    #[test]
    fn bare_knowledge_lines() {
        let p = parse_bare_triplets("Answer Related Knowledge Triples:\n\n(DUCK, taxonomic_class, AVES)\n\n(SCOTLAND, traditional_clothing, KILT)").unwrap();
        assert_eq!(p.triplets.len(), 2);
        let t = &p.triplets[0];
        assert_eq!((t.subject(), t.relation(), t.object()), ("DUCK", "taxonomic_class", "AVES"));
        assert_eq!(t.origin(), Origin::External);
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn bare_four_fields_is_skipped() {
        let p = parse_bare_triplets("(A, r, B, C)\n(A, r, B)").unwrap();
        assert_eq!(p.triplets.len(), 1);
        assert_eq!(p.diagnostics.len(), 1);
        assert!(parse_bare_triplets("(A, r, B, C)").is_err());
    }

    #[test]
    fn verdicts_in_order() {
        let v = parse_verdicts("1.No\n2.Yes\n3.Yes", 3);
        assert_eq!(v.values(), [Verdict::No, Verdict::Yes, Verdict::Yes]);
    }

    #[test]
    fn verdicts_default_to_no() {
        assert_eq!(parse_verdicts("", 2).values(), [Verdict::No, Verdict::No]);
        assert_eq!(parse_verdicts("2. YES", 3).values(), [Verdict::No, Verdict::Yes, Verdict::No]);
    }

    #[test]
    fn shuffled_verdicts_sort_by_index() {
        let v = parse_verdicts("2.Yes\n1.No", 2);
        assert_eq!(v.verdicts, [(1, Verdict::No), (2, Verdict::Yes)]);
    }

    #[test]
    fn duplicate_and_out_of_range_verdicts() {
        let v = parse_verdicts("1.Yes\n1.No\n7.Yes", 2);
        assert_eq!(v.values(), [Verdict::Yes, Verdict::No]);
        assert_eq!(v.diagnostics.len(), 2);
    }

    fn vt(s: &str, r: &str, o: &str) -> Triplet {
        Triplet::new(s, r, o, Origin::Visual).unwrap()
    }

    fn tt(s: &str, r: &str, o: &str) -> Triplet {
        Triplet::new(s, r, o, Origin::Textual).unwrap()
    }

    #[test]
    fn key_block_matches_prompt_layout() {
        let key = vec![
            vt("IMAGE", "depict", "SHEEP"),
            vt("IMAGE", "depict", "LAND ROVER"),
            tt("SHEEP", "commonly found in", "SCOTLAND"),
            tt("LAND ROVER", "associated with", "BRITISH COUNTRYSIDE"),
            tt("BRITISH COUNTRYSIDE", "includes", "SCOTLAND"),
        ];
        let block = serialize_key_triplets(&key).unwrap();
        assert_eq!(
            block,
            "visual_triplets_list:\n\nV1: (IMAGE, depict, SHEEP)\n\nV2: (IMAGE, depict, LAND ROVER)\n\n\
textual_triplets_list:\n\nT1: (SHEEP, commonly found in, SCOTLAND)\n\nT2: (LAND ROVER, associated with, BRITISH COUNTRYSIDE)\n\nT3: (BRITISH COUNTRYSIDE, includes, SCOTLAND)"
        );
    }

    #[test]
    fn single_visual_key_has_one_section() {
        let block = serialize_key_triplets(&[vt("IMAGE", "depict", "DUCK")]).unwrap();
        assert_eq!(block, "visual_triplets_list:\n\nV1: (IMAGE, depict, DUCK)");
        assert_eq!(serialize_key_triplets(&[]), Err(ParseError::EmptyKey));
    }

    #[test]
    fn extraction_serialization_parses_back() {
        let p = parse_labeled_triplets(GRAPH_EXTRACTION_EXAMPLE).unwrap();
        let again = parse_labeled_triplets(&serialize_extraction(&p)).unwrap();
        assert_eq!(p, again);
    }

    fn field() -> impl Strategy<Value = String> {
        "[A-Za-z0-9_][A-Za-z0-9_ .:'-]{0,12}[A-Za-z0-9_]"
    }

    fn triplet() -> impl Strategy<Value = Triplet> {
        (field(), field(), field(), prop::bool::ANY).prop_map(|(s, r, o, visual)| {
            let origin = if visual { Origin::Visual } else { Origin::Textual };
            Triplet::new(&s, &r, &o, origin).unwrap()
        })
    }

    proptest! {
        #[test]
        fn key_block_round_trips(key in prop::collection::vec(triplet(), 1..12)) {
            let block = serialize_key_triplets(&key).unwrap();
            let parsed = parse_labeled_triplets(&block).unwrap();
            let back: Vec<Triplet> = parsed.visual.iter().chain(&parsed.textual).cloned().map(Triplet::without_id).collect();
            let (v, t): (Vec<Triplet>, Vec<Triplet>) = key.iter().cloned().partition(|t| t.origin() == Origin::Visual);
            let expected: Vec<Triplet> = v.into_iter().chain(t).collect();
            prop_assert_eq!(back, expected);
            prop_assert_eq!(serialize_key_triplets(&parsed.visual.iter().chain(&parsed.textual).cloned().collect::<Vec<_>>()).unwrap(), block);
        }

        #[test]
        fn verdict_length_is_expected(text in ".{0,200}", expected in 1usize..20) {
            prop_assert_eq!(parse_verdicts(&text, expected).len(), expected);
        }

        #[test]
        fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = parse_labeled_triplets(&text);
            let _ = parse_bare_triplets(&text);
            let _ = parse_verdicts(&text, 3);
        }
    }
}
