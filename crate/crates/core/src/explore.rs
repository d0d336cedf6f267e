//! Sample evolution strategies: re-selecting a noun-terminated key path for
//! non-noun answers, and growing the key one external triplet per hop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::filters::{apply_answer_filter, FilterRun};
use crate::graph::{
    normalize_entity, paths_from_image_root, EvolutionRecord, GraphError, GraphPath, SampleGraphs, Triplet,
    VqaSample, DEFAULT_MAX_PATH_LEN,
};
use crate::lexicon::NounLexicon;
use crate::parse::parse_bare_triplets;
use crate::prompts::{render_prompt, PromptError, PromptKind};
use crate::provider::{Provider, ProviderError, ProviderRequest, RequestContext};

pub const DEFAULT_MAX_HOPS: u32 = 3;
pub const MAX_HOPS_LIMIT: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no path from the image root ends at a noun")]
    NoValidPath,
    #[error("answer {0:?} is not a noun")]
    AnswerNotNoun(String),
    #[error("no candidate survived filtering ({considered} considered)")]
    NoCandidate { considered: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReselectionResult {
    pub new_key: Vec<Triplet>,
    /// Vertices along the path, starting at the image root.
    pub path: Vec<String>,
    pub new_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    /// The answer is already a noun; the key is kept.
    PosT1,
    PosT2(ReselectionResult),
    Dropped(ExploreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationStep {
    pub chosen: Triplet,
    pub new_key: Vec<Triplet>,
    pub new_answer: String,
    pub rng_seed: u64,
    pub filter: FilterRun,
}

/// The longest noun-terminated path from the image root, using the default
/// path length cap.
pub fn reselect(graphs: &SampleGraphs, lexicon: &NounLexicon) -> Result<ReselectionResult, ExploreError> {
    reselect_with_limit(graphs, lexicon, DEFAULT_MAX_PATH_LEN)
}

/// Like [`reselect`] with an explicit cap on path length (in edges).
///
/// Among equally long paths the first in edge-sequence order wins.
pub fn reselect_with_limit(
    graphs: &SampleGraphs,
    lexicon: &NounLexicon,
    max_len: usize,
) -> Result<ReselectionResult, ExploreError> {
    let paths = paths_from_image_root(&graphs.visual, &graphs.textual, max_len)?;
    let mut best: Option<GraphPath> = None;
    for path in paths {
        if best.as_ref().is_some_and(|b| b.len() >= path.len()) {
            continue;
        }
        if lexicon.is_noun(path.terminal()).unwrap_or(false) {
            best = Some(path);
        }
    }
    let path = best.ok_or(ExploreError::NoValidPath)?;
    Ok(ReselectionResult {
        path: path.vertices().into_iter().map(str::to_string).collect(),
        new_answer: path.terminal().to_string(),
        new_key: path.into_edges(),
    })
}

pub fn route_sample(graphs: &SampleGraphs, lexicon: &NounLexicon) -> Route {
    route_sample_with_limit(graphs, lexicon, DEFAULT_MAX_PATH_LEN)
}

pub fn route_sample_with_limit(graphs: &SampleGraphs, lexicon: &NounLexicon, max_len: usize) -> Route {
    // Original answers are taken as representative; only the noun test applies.
    if lexicon.is_noun(&graphs.sample.answer).unwrap_or(false) {
        return Route::PosT1;
    }
    match reselect_with_limit(graphs, lexicon, max_len) {
        Ok(r) => Route::PosT2(r),
        Err(e) => Route::Dropped(e),
    }
}

/// Per-sample, per-hop RNG seed derived from the run seed.
pub fn hop_seed(seed: u64, sample_id: &str, hop: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((sample_id.len() as u64).to_le_bytes());
    h.update(sample_id.as_bytes());
    h.update(hop.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Adds one knowledge triplet about the current answer to the key.
///
/// `sample` supplies the sample id and image; the question and answer come
/// from `record`. The choice among accepted candidates is uniform under an
/// RNG seeded by `hop_seed(seed, sample id, record.hop + 1)`.
pub fn explore_one_hop<P: Provider + ?Sized>(
    record: &EvolutionRecord,
    sample: &VqaSample,
    provider: &P,
    lexicon: &NounLexicon,
    seed: u64,
) -> Result<ExplorationStep, ExploreError> {
    if !lexicon.is_noun(&record.answer).unwrap_or(false) {
        return Err(ExploreError::AnswerNotNoun(record.answer.clone()));
    }
    let prompt = render_prompt(
        PromptKind::GenerateKnowledge,
        &[("VQA_Q", &record.question), ("VQA_A", &record.answer)],
    )?;
    let request = ProviderRequest::new(PromptKind::GenerateKnowledge, prompt, Some(&sample.image_ref)).with_context(
        RequestContext {
            sample_id: Some(sample.sample_id.clone()),
            subject: Some(record.answer.clone()),
            ..Default::default()
        },
    );
    let text = provider.complete(&request)?;
    let subject = normalize_entity(&record.answer);
    let candidates: Vec<Triplet> = parse_bare_triplets(&text)
        .map(|b| b.triplets)
        .unwrap_or_default()
        .into_iter()
        .filter(|t| t.subject() == subject)
        .collect();
    let current = VqaSample {
        question: record.question.clone(),
        answer: record.answer.clone(),
        ..sample.clone()
    };
    let filter = apply_answer_filter(&candidates, &record.key, &current, provider, lexicon);
    let accepted = filter.accepted();
    if accepted.is_empty() {
        return Err(ExploreError::NoCandidate {
            considered: filter.outcomes.len(),
        });
    }
    let rng_seed = hop_seed(seed, &sample.sample_id, record.hop + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = accepted[rng.random_range(0..accepted.len())].clone();
    let mut new_key = record.key.clone();
    new_key.push(chosen.clone());
    Ok(ExplorationStep {
        new_answer: chosen.object().to_string(),
        chosen,
        new_key,
        rng_seed,
        filter,
    })
}
