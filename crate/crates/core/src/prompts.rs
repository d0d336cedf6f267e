//! The six provider prompts and their placeholder substitution.
//!
//! Templates live in `templates/*.txt` and are embedded at build time. Each
//! placeholder is written `{Name}` exactly as it appears in the template.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("{kind} prompt needs a non-empty value for {{{name}}}")]
    MissingPlaceholder { kind: PromptKind, name: String },
    #[error("{kind} prompt has no placeholder {{{name}}}")]
    UnknownPlaceholder { kind: PromptKind, name: String },
}

/// One kind per provider prompt; kinds and templates map one to one.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Extract,
    KeySelect,
    GenerateKnowledge,
    RepresentativeFilter,
    ExpressQuestion,
    Judge,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::Extract,
        PromptKind::KeySelect,
        PromptKind::GenerateKnowledge,
        PromptKind::RepresentativeFilter,
        PromptKind::ExpressQuestion,
        PromptKind::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Extract => "extract",
            PromptKind::KeySelect => "key_select",
            PromptKind::GenerateKnowledge => "generate_knowledge",
            PromptKind::RepresentativeFilter => "representative_filter",
            PromptKind::ExpressQuestion => "express_question",
            PromptKind::Judge => "judge",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            PromptKind::Extract => include_str!("../templates/extract.txt"),
            PromptKind::KeySelect => include_str!("../templates/key_select.txt"),
            PromptKind::GenerateKnowledge => include_str!("../templates/generate_knowledge.txt"),
            PromptKind::RepresentativeFilter => {
                include_str!("../templates/representative_filter.txt")
            }
            PromptKind::ExpressQuestion => include_str!("../templates/express_question.txt"),
            PromptKind::Judge => include_str!("../templates/judge.txt"),
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::Extract => &["Question content", "Model response"],
            PromptKind::KeySelect => &[
                "VQA_Q",
                "VQA_A",
                "Visual_Information_triplets_str",
                "Textual_Information_triplets_str",
            ],
            PromptKind::GenerateKnowledge => &["VQA_Q", "VQA_A"],
            PromptKind::RepresentativeFilter => &["VQA_Q", "VQA_A", "Related_Triplets"],
            PromptKind::ExpressQuestion => &[
                "Ori_VQA_Q",
                "Ori_VQA_A",
                "Key_Triplets_str",
                "New_VQA_related_Triplets",
                "New_VQA_Answer",
            ],
            PromptKind::Judge => &["Response", "Answer"],
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown prompt kind `{s}`"))
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_ ]+)\}").unwrap());

/// Substitutes every placeholder of `kind` in one pass.
///
/// Each declared placeholder must be supplied with a non-blank value, and
/// nothing else may be supplied. Substituted text is never re-expanded.
pub fn render_prompt(kind: PromptKind, inputs: &[(&str, &str)]) -> Result<String, PromptError> {
    let declared = kind.placeholders();
    let mut values: HashMap<&str, &str> = HashMap::new();
    for &(name, value) in inputs {
        if !declared.contains(&name) {
            return Err(PromptError::UnknownPlaceholder {
                kind,
                name: name.to_string(),
            });
        }
        values.insert(name, value);
    }
    for &name in declared {
        if values.get(name).is_none_or(|v| v.trim().is_empty()) {
            return Err(PromptError::MissingPlaceholder {
                kind,
                name: name.to_string(),
            });
        }
    }
    let rendered = PLACEHOLDER.replace_all(kind.template(), |caps: &regex::Captures<'_>| {
        match values.get(&caps[1]) {
            Some(v) => (*v).to_string(),
            None => caps[0].to_string(),
        }
    });
    Ok(rendered.into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_template_declares_exactly_its_placeholders() {
        for kind in PromptKind::ALL {
            let mut found: Vec<String> = PLACEHOLDER
                .captures_iter(kind.template())
                .map(|c| c[1].to_string())
                .collect();
            found.dedup();
            assert_eq!(found, kind.placeholders(), "{kind}");
        }
    }

    #[test]
    fn judge_prompt_renders() {
        let text = render_prompt(PromptKind::Judge, &[("Response", "Kilt"), ("Answer", "kilt")]).unwrap();
        assert!(text.contains("If they match, output \"Yes\""));
        assert!(text.contains("Response: Kilt\n\nAnswer: kilt"));
    }

    #[test]
    fn empty_input_is_missing() {
        let err = render_prompt(
            PromptKind::GenerateKnowledge,
            &[("VQA_Q", "  "), ("VQA_A", "duck")],
        )
        .unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingPlaceholder {
                kind: PromptKind::GenerateKnowledge,
                name: "VQA_Q".into()
            }
        );
        assert!(render_prompt(PromptKind::Judge, &[("Response", "x")]).is_err());
    }

    #[test]
    fn unknown_input_is_rejected() {
        let err = render_prompt(
            PromptKind::Judge,
            &[("Response", "a"), ("Answer", "b"), ("VQA_Q", "c")],
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::UnknownPlaceholder { .. }));
    }

    #[test]
    fn substitutions_are_not_reexpanded() {
        let text = render_prompt(
            PromptKind::Judge,
            &[("Response", "{Answer}"), ("Answer", "kilt")],
        )
        .unwrap();
        assert!(text.contains("Response: {Answer}"));
    }

    #[test]
    fn removing_substitutions_restores_template() {
        let marker = Regex::new("\u{1}([^\u{2}]*)\u{2}").unwrap();
        for kind in PromptKind::ALL {
            let inputs: Vec<(&str, String)> = kind
                .placeholders()
                .iter()
                .map(|&name| (name, format!("\u{1}{name}\u{2}")))
                .collect();
            let borrowed: Vec<(&str, &str)> = inputs.iter().map(|(k, v)| (*k, v.as_str())).collect();
            let rendered = render_prompt(kind, &borrowed).unwrap();
            let restored = marker.replace_all(&rendered, "{$1}");
            assert_eq!(restored, kind.template(), "{kind}");
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in PromptKind::ALL {
            assert_eq!(kind.as_str().parse::<PromptKind>(), Ok(kind));
        }
    }
}
