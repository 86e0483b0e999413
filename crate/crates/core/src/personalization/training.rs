use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{argmax, explanation_probabilities, ModelConfig, PreparedPoint, TaacoModel};
use super::tokens::{EmbeddingBank, TokenPlan, TokenRef, Tokenization};
use super::{expand_feedback, ModelError, TrainingPoint};
use crate::commonsense::{build_representation, ConceptVocabulary, ScoreCache, ScoredRepresentation, Scorer};
use crate::domain::{AdaptationLabel, FeedbackSample, StateSpace, StateVector, TaskDescription};
use crate::embedding::EmbeddingProvider;
use crate::neuralnet::{AdamConfig, AdamState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Weight of the explanation loss.
    pub lambda: f64,
    /// Concrete states drawn per feedback sample.
    pub n_aug: usize,
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub tokenization: Tokenization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1700,
            adam: AdamConfig::default(),
            lambda: 20.0,
            n_aug: 4,
            seed: 0,
            model: ModelConfig::default(),
            tokenization: Tokenization::Concepts,
        }
    }
}

impl TrainConfig {
    /// A small, quickly converging profile for experiment sweeps on one CPU:
    /// narrower model, fewer epochs, larger step.
    pub fn compact() -> Self {
        Self {
            epochs: 150,
            adam: AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() },
            n_aug: 2,
            model: ModelConfig { embed_dim: 8, layers: 2, heads: 2, ffn_dim: 48, seed: 0 },
            ..Self::default()
        }
    }

    /// Sets both the augmentation and the initialization seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }
}

/// Full-batch Adam on prepared points. Returns the model and the loss at
/// the start of every epoch.
pub fn fit(
    points: &[PreparedPoint],
    bank: &EmbeddingBank,
    state_variables: usize,
    config: &TrainConfig,
) -> Result<(TaacoModel, Vec<f64>), ModelError> {
    if points.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut model = TaacoModel::new(config.model, state_variables, bank.dim())?;
    let mut adam = AdamState::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = model.loss_and_gradients(points, bank, config.lambda)?;
        if !loss.total.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                detail: format!(
                    "cross-entropy {}, explanation {}, {} points",
                    loss.cross_entropy,
                    loss.explanation,
                    points.len()
                ),
            });
        }
        adam.step(&mut model);
        history.push(loss.total);
        if epoch % 100 == 0 {
            log::debug!("epoch {epoch}: loss {:.5}", loss.total);
        }
    }
    Ok((model, history))
}

/// A trained model with everything needed to use it again.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub state_space: StateSpace,
    pub vocabulary: ConceptVocabulary,
    pub embedder_id: String,
    pub model: TaacoModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub loss_history: Vec<f64>,
}

/// Expands each `(sample, representation)` pair into concrete states and
/// trains a fresh model on all of them.
pub fn train(
    data: &[(FeedbackSample, ScoredRepresentation)],
    space: &StateSpace,
    vocab: &ConceptVocabulary,
    embedder: &dyn EmbeddingProvider,
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut points: Vec<TrainingPoint> = Vec::new();
    for (sample, rep) in data {
        sample.validate(space)?;
        points.extend(expand_feedback(sample, space, rep, config.n_aug, &mut rng)?);
    }
    let tasks: Vec<&TaskDescription> = data.iter().map(|(s, _)| &s.task).collect();
    let bank = EmbeddingBank::for_model(embedder, vocab, config.tokenization, &tasks)?;
    let prepared = points
        .iter()
        .map(|p| p.prepare(space, vocab, &bank, config.tokenization))
        .collect::<Result<Vec<_>, _>>()?;
    let (model, loss_history) = fit(&prepared, &bank, space.len(), config)?;
    Ok(TrainOutcome {
        model: TrainedModel {
            config: *config,
            state_space: space.clone(),
            vocabulary: vocab.clone(),
            embedder_id: embedder.id(),
            model,
        },
        loss_history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: AdaptationLabel,
    /// Softmax over the labels in enum order.
    pub probabilities: Vec<f64>,
    pub explanation: TokenRef,
    pub explanation_probability: f64,
    /// Head-averaged `<OUT>` attention over the input rows.
    pub attention: Vec<f64>,
}

impl TrainedModel {
    /// Embeddings for the vocabulary and, if needed, the given tasks'
    /// components. Refuses a provider other than the one trained with.
    pub fn bank(&self, embedder: &dyn EmbeddingProvider, tasks: &[&TaskDescription]) -> Result<EmbeddingBank, ModelError> {
        if embedder.id() != self.embedder_id {
            return Err(ModelError::EmbedderMismatch { expected: self.embedder_id.clone(), got: embedder.id() });
        }
        Ok(EmbeddingBank::for_model(embedder, &self.vocabulary, self.config.tokenization, tasks)?)
    }

    pub fn plan(
        &self,
        task: &TaskDescription,
        rep: &ScoredRepresentation,
        state: &StateVector,
        bank: &EmbeddingBank,
    ) -> Result<TokenPlan, ModelError> {
        match self.config.tokenization {
            Tokenization::Concepts => super::plan_concept_tokens(rep, state, &self.state_space, &self.vocabulary, bank),
            Tokenization::Components => super::plan_component_tokens(task, state, &self.state_space, bank),
        }
    }

    /// Prediction for a plan given the bank projected by this model.
    pub fn predict_plan(&self, plan: &TokenPlan, projected: &Tensor) -> Result<Prediction, ModelError> {
        let (label, probabilities, attention) = self.model.classify(plan, projected)?;
        let probs = explanation_probabilities(&attention);
        let best = argmax(&probs).ok_or_else(|| ModelError::Shape("no input rows".into()))?;
        Ok(Prediction {
            label,
            probabilities,
            explanation: plan.index_map[best].clone(),
            explanation_probability: probs[best],
            attention,
        })
    }

    pub fn predict_with(
        &self,
        task: &TaskDescription,
        rep: &ScoredRepresentation,
        state: &StateVector,
        bank: &EmbeddingBank,
    ) -> Result<Prediction, ModelError> {
        let plan = self.plan(task, rep, state, bank)?;
        let projected = self.model.project_bank(bank)?;
        self.predict_plan(&plan, &projected)
    }

    /// Scores the task, tokenizes, and classifies. `vocab` must be the
    /// vocabulary the model was trained with.
    pub fn predict(
        &self,
        task: &TaskDescription,
        state: &StateVector,
        vocab: &ConceptVocabulary,
        scorer: &Scorer,
        cache: &ScoreCache,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Prediction, ModelError> {
        if !vocab.same_concepts(&self.vocabulary) {
            return Err(ModelError::VocabularyMismatch("vocabulary differs from the one the model was trained with".into()));
        }
        state
            .check(&self.state_space)
            .map_err(|e| ModelError::StateSpaceMismatch(e.to_string()))?;
        let rep = build_representation(task, &self.vocabulary, scorer, cache)?;
        let bank = self.bank(embedder, &[task])?;
        self.predict_with(task, &rep, state, &bank)
    }
}
