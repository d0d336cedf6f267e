//! Answer filtering for exploration candidates: cycle check, noun test and
//! provider-judged representativeness, cheapest first.

use serde::{Deserialize, Serialize};

use crate::graph::{dedup_triplets, detect_cycle, Triplet, VqaSample};
use crate::lexicon::NounLexicon;
use crate::parse::{format_numbered, parse_verdicts, Diagnostic, Verdict, VerdictList};
use crate::prompts::{render_prompt, PromptKind};
use crate::provider::{Provider, ProviderRequest, RequestContext};

/// Result of one filter stage. `Skipped` means an earlier stage already
/// rejected the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Pass,
    Fail,
    Skipped,
}

impl Check {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Check::Pass
        } else {
            Check::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Check::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub triplet: Triplet,
    pub cycle_free: Check,
    pub pos_noun: Check,
    pub representative: Check,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterRun {
    /// One outcome per distinct candidate, in first-seen order.
    pub outcomes: Vec<FilterOutcome>,
    pub diagnostics: Vec<Diagnostic>,
}

impl FilterRun {
    pub fn accepted(&self) -> Vec<&Triplet> {
        self.outcomes.iter().filter(|o| o.accepted).map(|o| &o.triplet).collect()
    }
}

/// Passes when the candidate's object is not a subject of `key` and adding
/// the candidate leaves the key acyclic.
pub fn cycle_check(candidate: &Triplet, key: &[Triplet]) -> bool {
    if key.iter().any(|t| t.subject() == candidate.object()) {
        return false;
    }
    let mut extended = key.to_vec();
    extended.push(candidate.clone());
    !detect_cycle(&extended)
}

/// Asks the provider which candidates are representative of their subject.
///
/// Any provider or prompt failure yields an all-No list with the error
/// recorded as a diagnostic.
pub fn representative_filter<P: Provider + ?Sized>(
    candidates: &[Triplet],
    sample: &VqaSample,
    provider: &P,
) -> VerdictList {
    if candidates.is_empty() {
        return VerdictList::default();
    }
    let failed = |reason: String| {
        let mut list = VerdictList::all(candidates.len(), Verdict::No);
        list.diagnostics.push(Diagnostic {
            line: 0,
            text: String::new(),
            reason,
        });
        list
    };
    let related = format_numbered(candidates);
    let prompt = match render_prompt(
        PromptKind::RepresentativeFilter,
        &[
            ("VQA_Q", &sample.question),
            ("VQA_A", &sample.answer),
            ("Related_Triplets", &related),
        ],
    ) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let request = ProviderRequest::new(PromptKind::RepresentativeFilter, prompt, Some(&sample.image_ref)).with_context(
        RequestContext {
            sample_id: Some(sample.sample_id.clone()),
            triplets: candidates.to_vec(),
            ..Default::default()
        },
    );
    match provider.complete(&request) {
        Ok(text) => parse_verdicts(&text, candidates.len()),
        Err(e) => failed(e.to_string()),
    }
}

/// Runs the three filters over `candidates` against the current key.
///
/// Duplicates are merged first, and a candidate already in the key fails the
/// cycle stage since it would not add an edge. The provider is consulted
/// once, and only for candidates that passed both local checks.
pub fn apply_answer_filter<P: Provider + ?Sized>(
    candidates: &[Triplet],
    key: &[Triplet],
    sample: &VqaSample,
    provider: &P,
    lexicon: &NounLexicon,
) -> FilterRun {
    let mut outcomes: Vec<FilterOutcome> = dedup_triplets(candidates)
        .into_iter()
        .map(|t| {
            let in_key = key.iter().any(|k| k.same_fact(&t));
            let cycle_free = Check::from_bool(!in_key && cycle_check(&t, key));
            let pos_noun = if cycle_free.passed() {
                Check::from_bool(lexicon.is_noun(t.object()).unwrap_or(false))
            } else {
                Check::Skipped
            };
            FilterOutcome {
                triplet: t,
                cycle_free,
                pos_noun,
                representative: Check::Skipped,
                accepted: false,
            }
        })
        .collect();
    let survivors: Vec<usize> = (0..outcomes.len())
        .filter(|&i| outcomes[i].pos_noun.passed())
        .collect();
    let mut diagnostics = Vec::new();
    if !survivors.is_empty() {
        let sent: Vec<Triplet> = survivors.iter().map(|&i| outcomes[i].triplet.clone()).collect();
        let verdicts = representative_filter(&sent, sample, provider);
        for (n, &i) in survivors.iter().enumerate() {
            let yes = verdicts.get(n + 1).is_some_and(Verdict::is_yes);
            outcomes[i].representative = Check::from_bool(yes);
            outcomes[i].accepted = yes;
        }
        diagnostics = verdicts.diagnostics;
    }
    FilterRun { outcomes, diagnostics }
}
