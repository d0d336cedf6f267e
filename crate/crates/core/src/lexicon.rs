//! Lexicon-based noun test for answers.
//!
//! An answer counts as a noun when its head (last) token is a noun. The
//! bundled word list is derived from WordNet noun lemmas with attribute words
//! (colors, sizes, states, yes/no) and verb participles removed.

use std::collections::HashSet;
use std::io::{self, BufRead};
use std::path::Path;
use std::sync::{Arc, LazyLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("answer has no word token")]
    EmptyAnswer,
}

static BUNDLED: LazyLock<Arc<HashSet<String>>> = LazyLock::new(|| {
    Arc::new(
        include_str!("../data/nouns.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
    )
});

// Tried in order; the first stem found in the lexicon wins.
const PLURAL_RULES: [(&str, &str); 9] = [
    ("s", ""),
    ("ses", "s"),
    ("ves", "f"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
];

#[derive(Debug, Clone)]
pub struct NounLexicon {
    words: Arc<HashSet<String>>,
    /// Purely numeric answers ("3", "1,200") are not nouns unless this is set.
    pub numeric_as_noun: bool,
    /// An unknown Titlecase token ("Paris") is taken as a proper noun.
    pub proper_noun_heuristic: bool,
}

impl Default for NounLexicon {
    fn default() -> Self {
        NounLexicon::bundled()
    }
}

impl NounLexicon {
    pub fn bundled() -> Self {
        NounLexicon::with_words(Arc::clone(&BUNDLED))
    }

    fn with_words(words: Arc<HashSet<String>>) -> Self {
        NounLexicon {
            words,
            numeric_as_noun: false,
            proper_noun_heuristic: true,
        }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        NounLexicon::with_words(Arc::new(set))
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut words = Vec::new();
        for line in io::BufReader::new(file).lines() {
            let line = line?;
            if !line.trim_start().starts_with('#') {
                words.push(line);
            }
        }
        Ok(NounLexicon::from_words(words))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    fn contains_noun_form(&self, lower: &str) -> bool {
        if self.words.contains(lower) {
            return true;
        }
        PLURAL_RULES.iter().any(|(suffix, repl)| {
            lower.strip_suffix(suffix).is_some_and(|stem| {
                !stem.is_empty()
                    && !is_numeric(stem)
                    && self.words.contains(&format!("{stem}{repl}"))
            })
        })
    }

    pub fn is_noun(&self, answer: &str) -> Result<bool, LexiconError> {
        let head = head_token(answer).ok_or(LexiconError::EmptyAnswer)?;
        if is_numeric(head) {
            return Ok(self.numeric_as_noun);
        }
        if self.contains_noun_form(&head.to_lowercase()) {
            return Ok(true);
        }
        Ok(self.proper_noun_heuristic && is_titlecase(head))
    }
}

/// Noun test on the answer's head token using `lexicon` and its settings.
pub fn pos_is_noun(answer: &str, lexicon: &NounLexicon) -> Result<bool, LexiconError> {
    lexicon.is_noun(answer)
}

/// Last token after splitting on whitespace, `_` and `-`, with surrounding
/// punctuation trimmed.
pub fn head_token(answer: &str) -> Option<&str> {
    answer
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .rfind(|t| !t.is_empty())
}

fn is_numeric(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
}

fn is_titlecase(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(char::is_uppercase) && chars.any(char::is_lowercase)
}
