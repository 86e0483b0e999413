//! The learned half of the system: concept tokens in, adaptation label and
//! attention-derived explanation out.

mod checkpoint;
mod model;
mod tokens;
mod training;

use rand::Rng;
use thiserror::Error;

use crate::commonsense::{CommonsenseError, ConceptVocabulary, ScoredRepresentation};
use crate::domain::{
    AdaptationLabel, DomainError, ExplanationItem, FeedbackSample, StateSpace, StateVector, TaskDescription,
};
use crate::embedding::EmbeddingError;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{
    argmax, explanation_probabilities, extract_explanation, LossBreakdown, ModelConfig, PreparedPoint, TaacoModel,
};
pub use tokens::{
    plan_component_tokens, plan_concept_tokens, EmbeddingBank, TokenPlan, TokenRef, Tokenization, TokenizedInput,
};
pub use training::{fit, train, Prediction, TrainConfig, TrainOutcome, TrainedModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("state space mismatch: {0}")]
    StateSpaceMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no training data")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("model was trained with embeddings '{expected}', got '{got}'")]
    EmbedderMismatch { expected: String, got: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Commonsense(#[from] CommonsenseError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// A concrete (task, state) example derived from a feedback sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPoint {
    pub task: TaskDescription,
    pub representation: ScoredRepresentation,
    pub state: StateVector,
    pub label: AdaptationLabel,
    /// Over concept tokens (representation entries, then state variables).
    pub explanation_targets: Option<Vec<f64>>,
    /// Explanation items plus constrained state variables.
    pub ground_truth: Vec<ExplanationItem>,
}

impl TrainingPoint {
    pub fn plan(
        &self,
        space: &StateSpace,
        vocab: &ConceptVocabulary,
        bank: &EmbeddingBank,
        tokenization: Tokenization,
    ) -> Result<TokenPlan, ModelError> {
        match tokenization {
            Tokenization::Concepts => plan_concept_tokens(&self.representation, &self.state, space, vocab, bank),
            Tokenization::Components => plan_component_tokens(&self.task, &self.state, space, bank),
        }
    }

    pub fn prepare(
        &self,
        space: &StateSpace,
        vocab: &ConceptVocabulary,
        bank: &EmbeddingBank,
        tokenization: Tokenization,
    ) -> Result<PreparedPoint, ModelError> {
        let plan = self.plan(space, vocab, bank, tokenization)?;
        let targets = (!self.ground_truth.is_empty()).then(|| plan.targets(&self.ground_truth));
        Ok(PreparedPoint { plan, label: self.label, targets })
    }
}

/// Realizes a feedback sample as `n_aug` concrete states: constrained
/// variables fixed, the rest drawn uniformly.
pub fn expand_feedback<R: Rng + ?Sized>(
    sample: &FeedbackSample,
    space: &StateSpace,
    rep: &ScoredRepresentation,
    n_aug: usize,
    rng: &mut R,
) -> Result<Vec<TrainingPoint>, ModelError> {
    let fixed = match &sample.constraint {
        Some(c) => c.resolve(space)?,
        None => Vec::new(),
    };
    let ground_truth = sample.ground_truth_set();
    let targets = (!ground_truth.is_empty()).then(|| {
        let concept_rows = rep.entries.iter().map(|e| {
            ExplanationItem::component(&e.component, e.component_type, &e.concept)
        });
        let state_rows = space.variables().iter().map(|v| ExplanationItem::state(v));
        concept_rows
            .chain(state_rows)
            .map(|row| if ground_truth.iter().any(|g| g.matches(&row)) { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>()
    });
    let mut out = Vec::with_capacity(n_aug);
    for _ in 0..n_aug {
        let mut values: Vec<bool> = (0..space.len()).map(|_| rng.gen_bool(0.5)).collect();
        for &(i, v) in &fixed {
            values[i] = v;
        }
        out.push(TrainingPoint {
            task: sample.task.clone(),
            representation: rep.clone(),
            state: StateVector::new(values),
            label: sample.adaptation,
            explanation_targets: targets.clone(),
            ground_truth: ground_truth.clone(),
        });
    }
    Ok(out)
}
