use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::commonsense::{ConceptVocabulary, ScoredRepresentation};
use crate::domain::{norm_key, ComponentType, ExplanationItem, StateSpace, StateVector, TaskDescription};
use crate::embedding::{EmbeddingError, EmbeddingProvider};
use crate::neuralnet::Tensor;

/// How a task is turned into input rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    /// One row per (component, concept) pair carrying the match score.
    #[default]
    Concepts,
    /// One row per component, embedding the component text directly.
    Components,
}

/// What an input row stands for; the explanation the model gives when that
/// row receives the most attention.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TokenRef {
    Concept {
        component: String,
        component_type: ComponentType,
        concept: String,
    },
    Component {
        component: String,
        component_type: ComponentType,
    },
    State {
        state_variable: String,
    },
}

impl TokenRef {
    /// The equivalent explanation item; `None` for bare component rows,
    /// which name no concept.
    pub fn explanation_item(&self) -> Option<ExplanationItem> {
        match self {
            TokenRef::Concept { component, component_type, concept } => {
                Some(ExplanationItem::component(component, *component_type, concept))
            }
            TokenRef::Component { .. } => None,
            TokenRef::State { state_variable } => Some(ExplanationItem::state(state_variable)),
        }
    }

    /// Whether this row is covered by a ground-truth item. A bare component
    /// row is covered by any item naming that component.
    pub fn hits(&self, item: &ExplanationItem) -> bool {
        match (self, item) {
            (
                TokenRef::Component { component, component_type },
                ExplanationItem::Component { component: c, component_type: t, .. },
            ) => component_type == t && norm_key(component) == norm_key(c),
            (TokenRef::Component { .. }, _) => false,
            (r, item) => r.explanation_item().is_some_and(|e| e.matches(item)),
        }
    }

    pub fn hits_any(&self, items: &[ExplanationItem]) -> bool {
        items.iter().any(|i| self.hits(i))
    }
}

impl std::fmt::Display for TokenRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenRef::Concept { component, component_type, concept } => {
                write!(f, "{component_type} '{component}' {concept}")
            }
            TokenRef::Component { component, component_type } => write!(f, "{component_type} '{component}'"),
            TokenRef::State { state_variable } => write!(f, "state '{state_variable}'"),
        }
    }
}

/// Language embeddings of every text a model reads, stacked as `[B, D]` so the
/// concept projection runs once per batch.
#[derive(Debug, Clone)]
pub struct EmbeddingBank {
    dim: usize,
    index: HashMap<String, usize>,
    keys: Vec<String>,
    matrix: Tensor,
}

impl EmbeddingBank {
    pub fn new(dim: usize) -> Self {
        Self { dim, index: HashMap::new(), keys: Vec::new(), matrix: Tensor::zeros(&[0, dim]) }
    }

    pub fn build<'a, I>(embedder: &dyn EmbeddingProvider, texts: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut bank = Self::new(embedder.dim());
        bank.extend(embedder, texts)?;
        Ok(bank)
    }

    /// Concept texts of the vocabulary, plus component texts of `tasks`
    /// when the tokenization needs them.
    pub fn for_model(
        embedder: &dyn EmbeddingProvider,
        vocab: &ConceptVocabulary,
        tokenization: Tokenization,
        tasks: &[&TaskDescription],
    ) -> Result<Self, EmbeddingError> {
        let mut bank = Self::new(embedder.dim());
        let concepts: Vec<String> = vocab.iter().map(|c| c.text).collect();
        bank.extend(embedder, concepts.iter().map(String::as_str))?;
        if tokenization == Tokenization::Components {
            for task in tasks {
                bank.extend(embedder, task.components().map(|(_, c)| c))?;
            }
        }
        Ok(bank)
    }

    /// Adds embeddings for texts not yet present.
    pub fn extend<'a, I>(&mut self, embedder: &dyn EmbeddingProvider, texts: I) -> Result<usize, EmbeddingError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut data = Vec::new();
        let mut added = 0;
        for text in texts {
            let key = norm_key(text);
            if self.index.contains_key(&key) {
                continue;
            }
            let v = embedder.embed(text)?;
            if v.dim() != self.dim {
                return Err(EmbeddingError::DimensionMismatch { expected: self.dim, got: v.dim(), line: 0 });
            }
            data.extend_from_slice(v.values());
            self.index.insert(key.clone(), self.keys.len());
            self.keys.push(key);
            added += 1;
        }
        if added > 0 {
            let mut all = std::mem::replace(&mut self.matrix, Tensor::zeros(&[0, self.dim])).into_data();
            all.extend(data);
            self.matrix = Tensor::from_vec(&[self.keys.len(), self.dim], all).expect("rows match keys");
        }
        Ok(added)
    }

    pub fn index_of(&self, text: &str) -> Option<usize> {
        self.index.get(&norm_key(text)).copied()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TokenContent {
    /// Row of the embedding bank, passed through the concept projection.
    Text(usize),
    /// Learned per-variable embedding.
    StateVariable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TokenRow {
    pub kind: ComponentType,
    pub content: TokenContent,
    pub magnitude: f64,
}

/// Model-independent description of the input rows; weights turn it into a
/// [`TokenizedInput`].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPlan {
    pub(crate) rows: Vec<TokenRow>,
    pub index_map: Vec<TokenRef>,
}

impl TokenPlan {
    /// Number of input rows, excluding `<OUT>`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Binary targets over the rows: 1 where a ground-truth item covers it.
    pub fn targets(&self, ground_truth: &[ExplanationItem]) -> Vec<f64> {
        self.index_map.iter().map(|r| if r.hits_any(ground_truth) { 1.0 } else { 0.0 }).collect()
    }

    fn push_state_rows(&mut self, state: &StateVector, space: &StateSpace) -> Result<(), ModelError> {
        state.check(space).map_err(|e| ModelError::StateSpaceMismatch(e.to_string()))?;
        for (i, (name, &on)) in space.variables().iter().zip(&state.values).enumerate() {
            self.rows.push(TokenRow {
                kind: ComponentType::State,
                content: TokenContent::StateVariable(i),
                magnitude: if on { 1.0 } else { 0.0 },
            });
            self.index_map.push(TokenRef::State { state_variable: name.clone() });
        }
        Ok(())
    }
}

/// Concept rows in representation order, then one row per state variable.
pub fn plan_concept_tokens(
    rep: &ScoredRepresentation,
    state: &StateVector,
    space: &StateSpace,
    vocab: &ConceptVocabulary,
    bank: &EmbeddingBank,
) -> Result<TokenPlan, ModelError> {
    let mut plan = TokenPlan { rows: Vec::with_capacity(rep.len() + space.len()), index_map: Vec::new() };
    for e in &rep.entries {
        if !vocab.contains(e.component_type, &e.concept) {
            return Err(ModelError::VocabularyMismatch(format!(
                "{} concept '{}' is not in the model vocabulary",
                e.component_type, e.concept
            )));
        }
        let idx = bank
            .index_of(&e.concept)
            .ok_or_else(|| ModelError::VocabularyMismatch(format!("no embedding for concept '{}'", e.concept)))?;
        plan.rows.push(TokenRow { kind: e.component_type, content: TokenContent::Text(idx), magnitude: e.score });
        plan.index_map.push(TokenRef::Concept {
            component: e.component.clone(),
            component_type: e.component_type,
            concept: e.concept.clone(),
        });
    }
    plan.push_state_rows(state, space)?;
    Ok(plan)
}

/// Concept-free layout: one row per task component with magnitude 1.
pub fn plan_component_tokens(
    task: &TaskDescription,
    state: &StateVector,
    space: &StateSpace,
    bank: &EmbeddingBank,
) -> Result<TokenPlan, ModelError> {
    let mut plan = TokenPlan { rows: Vec::new(), index_map: Vec::new() };
    for (t, component) in task.components() {
        let idx = bank
            .index_of(component)
            .ok_or_else(|| ModelError::VocabularyMismatch(format!("no embedding for component '{component}'")))?;
        plan.rows.push(TokenRow { kind: t, content: TokenContent::Text(idx), magnitude: 1.0 });
        plan.index_map.push(TokenRef::Component { component: component.to_string(), component_type: t });
    }
    plan.push_state_rows(state, space)?;
    Ok(plan)
}

/// Input matrix `[n+1, 3e]` (last row `<OUT>`) with row back-references.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedInput {
    pub matrix: Tensor,
    pub index_map: Vec<TokenRef>,
}

impl TokenizedInput {
    /// Number of input rows, excluding `<OUT>`.
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    /// Reorders the input rows (not `<OUT>`): new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, ModelError> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(ModelError::Shape(format!("invalid permutation of {n} rows")));
        }
        let (rows, d) = self.matrix.dims2();
        let mut data = Vec::with_capacity(rows * d);
        for &p in perm {
            data.extend_from_slice(self.matrix.row(p));
        }
        data.extend_from_slice(self.matrix.row(n));
        Ok(Self {
            matrix: Tensor::from_vec(&[rows, d], data).expect("same shape"),
            index_map: perm.iter().map(|&p| self.index_map[p].clone()).collect(),
        })
    }
}
