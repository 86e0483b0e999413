//! Concept scoring: turns a task into its concept representation, one match
//! score per (component, same-type concept) pair.
//!
//! Scores come from a [`CompletionClient`] asked one independent question per
//! pair, or from a [`ScoreCache`] alone in replay mode.

mod cache;
mod client;
mod vocabulary;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ScoreCache, ScoreCacheEntry};
pub use client::{
    ClientConfig, CompletionClient, HttpCompletionClient, RecordingClient, TranscriptRecord,
    TranscriptReplay, TransportError, API_KEY_ENV,
};
pub use vocabulary::{extend_vocabulary, Concept, ConceptLists, ConceptVocabulary, Provenance, VocabEntry};

use crate::domain::{norm_key, ComponentType, ExplanationItem, TaskDescription};

#[derive(Debug, Error)]
pub enum CommonsenseError {
    #[error("component type {component} does not match concept type {concept}")]
    TypeMismatch { component: ComponentType, concept: ComponentType },
    #[error("no cached score for {0:?} (replay mode)")]
    CacheMiss(CacheKey),
    #[error("scoring transport failed: {0}")]
    Transport(#[from] TransportError),
    #[error("concept not in vocabulary: {0} '{1}'")]
    MissingConcept(ComponentType, String),
    #[error("explanation names {0}, which is not in the representation")]
    DanglingExplanation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Linear map of a 1..=10 judgment onto [0, 1]. Out-of-range input is
/// clamped.
pub fn rescale_score(raw: i64) -> f64 {
    let clamped = raw.clamp(1, 10);
    if clamped != raw {
        warn!("raw score {raw} outside 1..=10, clamped to {clamped}");
    }
    (clamped - 1) as f64 / 9.0
}

/// Prompt for one component–concept pair, with no other context.
pub fn scoring_prompt(component: &str, component_type: ComponentType, concept: &str) -> String {
    format!(
        "On a scale of 1 to 10, how well does the {} '{}' match the description: it {}? Answer with a single integer.",
        component_type.type_word(),
        component,
        concept
    )
}

/// First run of ASCII digits in the text.
pub fn parse_first_integer(text: &str) -> Option<i64> {
    text.split(|c: char| !c.is_ascii_digit())
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse().ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    /// Transport errors surface to the caller.
    Strict,
    /// Transport errors degrade to a raw score of 1.
    Lenient,
}

/// Identifies a scoring service and how to reach it.
pub struct Scorer {
    id: String,
    client: Option<Arc<dyn CompletionClient>>,
    mode: ScoringMode,
    calls: AtomicUsize,
}

impl Scorer {
    /// Cache-only scorer: misses are errors.
    pub fn replay(id: &str) -> Self {
        Self { id: id.to_string(), client: None, mode: ScoringMode::Strict, calls: AtomicUsize::new(0) }
    }

    pub fn live(id: &str, client: Arc<dyn CompletionClient>, mode: ScoringMode) -> Self {
        Self { id: id.to_string(), client: Some(client), mode, calls: AtomicUsize::new(0) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_replay(&self) -> bool {
        self.client.is_none()
    }

    /// Number of client requests issued so far.
    pub fn client_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn ask(&self, client: &dyn CompletionClient, prompt: &str) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        client.complete(prompt)
    }

    /// Queries the client for one pair, bypassing the cache.
    fn query(
        &self,
        client: &dyn CompletionClient,
        component: &str,
        component_type: ComponentType,
        concept: &str,
    ) -> Result<Option<u8>, CommonsenseError> {
        let prompt = scoring_prompt(component, component_type, concept);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.ask(client, &prompt) {
                Ok(text) => {
                    if let Some(v) = parse_first_integer(&text) {
                        return Ok(Some(v.clamp(1, 10) as u8));
                    }
                    if attempts >= 2 {
                        warn!("unparseable score for '{component}' / '{concept}': {text:?}; using 1");
                        return Ok(Some(1));
                    }
                }
                Err(e) => match self.mode {
                    ScoringMode::Strict => return Err(e.into()),
                    ScoringMode::Lenient => {
                        warn!("scoring transport failed for '{component}' / '{concept}': {e}; using 1");
                        return Ok(None);
                    }
                },
            }
        }
    }
}

/// Raw 1..=10 score for a pair, from the cache when possible.
pub fn score_pair(
    component: &str,
    component_type: ComponentType,
    concept: &Concept,
    scorer: &Scorer,
    cache: &ScoreCache,
) -> Result<u8, CommonsenseError> {
    if component_type != concept.component_type {
        return Err(CommonsenseError::TypeMismatch {
            component: component_type,
            concept: concept.component_type,
        });
    }
    let key = CacheKey::new(&scorer.id, component_type, component, &concept.text);
    if let Some(v) = cache.get(&key) {
        return Ok(v);
    }
    let Some(client) = scorer.client.as_deref() else {
        return Err(CommonsenseError::CacheMiss(key));
    };
    match scorer.query(client, component, component_type, &concept.text)? {
        Some(raw) => {
            cache.insert(ScoreCacheEntry::new(&scorer.id, component_type, component, &concept.text, raw))?;
            Ok(raw)
        }
        // lenient transport failure: not cached so a later run can retry
        None => Ok(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub component: String,
    pub component_type: ComponentType,
    pub concept: String,
    pub score: f64,
}

/// A task expressed as concept match scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredRepresentation {
    pub entries: Vec<ScoredEntry>,
}

impl ScoredRepresentation {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Expected entry count: Σ over component instances of |vocab(type)|.
pub fn representation_size(task: &TaskDescription, vocab: &ConceptVocabulary) -> usize {
    task.components().map(|(t, _)| vocab.concepts(t).len()).sum()
}

/// Scores every component against every concept of its type. Entries follow
/// task component order, then vocabulary order.
pub fn build_representation(
    task: &TaskDescription,
    vocab: &ConceptVocabulary,
    scorer: &Scorer,
    cache: &ScoreCache,
) -> Result<ScoredRepresentation, CommonsenseError> {
    let mut entries = Vec::with_capacity(representation_size(task, vocab));
    for (t, component) in task.components() {
        for concept in vocab.concepts(t) {
            let c = Concept { text: concept.text.clone(), component_type: t };
            let raw = score_pair(component, t, &c, scorer, cache)?;
            entries.push(ScoredEntry {
                component: component.to_string(),
                component_type: t,
                concept: concept.text.clone(),
                score: rescale_score(raw as i64),
            });
        }
    }
    Ok(ScoredRepresentation { entries })
}

/// Scores every missing pair for the given tasks, issuing up to
/// `max_concurrent` client requests at a time. Returns the number of new
/// cache entries.
pub fn warm_cache(
    tasks: &[TaskDescription],
    vocab: &ConceptVocabulary,
    scorer: &Scorer,
    cache: &ScoreCache,
    max_concurrent: usize,
) -> Result<usize, CommonsenseError> {
    let mut pending: Vec<(ComponentType, String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for task in tasks {
        for (t, component) in task.components() {
            for concept in vocab.concepts(t) {
                let key = CacheKey::new(&scorer.id, t, component, &concept.text);
                if !cache.contains(&key) && seen.insert(key) {
                    pending.push((t, component.to_string(), concept.text.clone()));
                }
            }
        }
    }
    if pending.is_empty() {
        return Ok(0);
    }
    let Some(client) = scorer.client.as_deref() else {
        let (t, comp, concept) = &pending[0];
        return Err(CommonsenseError::CacheMiss(CacheKey::new(&scorer.id, *t, comp, concept)));
    };
    let mut added = 0;
    for chunk in pending.chunks(max_concurrent.max(1)) {
        let results: Vec<Result<Option<u8>, CommonsenseError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(t, comp, concept)| s.spawn(move || scorer.query(client, comp, *t, concept)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
        });
        // inserted in request order so the cache file is deterministic
        for ((t, comp, concept), r) in chunk.iter().zip(results) {
            if let Some(raw) = r? {
                if cache.insert(ScoreCacheEntry::new(&scorer.id, *t, comp, concept, raw))? {
                    added += 1;
                }
            }
        }
    }
    Ok(added)
}

/// Sets the score of every pair named in the explanation to 1.0.
/// State items are ignored.
pub fn apply_oracle(
    rep: &ScoredRepresentation,
    explanation: &[ExplanationItem],
    vocab: &ConceptVocabulary,
) -> Result<ScoredRepresentation, CommonsenseError> {
    let mut out = rep.clone();
    for item in explanation {
        let ExplanationItem::Component { component, component_type, concept } = item else {
            continue;
        };
        if !vocab.contains(*component_type, concept) {
            return Err(CommonsenseError::MissingConcept(*component_type, concept.clone()));
        }
        let (ck, tk) = (norm_key(component), norm_key(concept));
        let mut found = false;
        for e in out.entries.iter_mut().filter(|e| {
            e.component_type == *component_type && norm_key(&e.component) == ck && norm_key(&e.concept) == tk
        }) {
            e.score = 1.0;
            found = true;
        }
        if !found {
            return Err(CommonsenseError::DanglingExplanation(format!("{component_type} '{component}'")));
        }
    }
    Ok(out)
}
