//! Core domain types: task descriptions, adaptation labels, state spaces,
//! state constraints and user feedback.
//!
//! Text fields keep their display casing; all comparisons go through
//! [`norm_key`], which lowercases, trims and collapses internal whitespace.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("task action is empty")]
    EmptyAction,
    #[error("task activity is empty")]
    EmptyActivity,
    #[error("empty {0} component")]
    EmptyComponent(ComponentType),
    #[error("duplicate component: {0}")]
    DuplicateComponent(String),
    #[error("unknown adaptation label: {0}")]
    UnknownLabel(String),
    #[error("unknown component type: {0}")]
    UnknownComponentType(String),
    #[error("unknown state variable: {0}")]
    UnknownVariable(String),
    #[error("duplicate state variable: {0}")]
    DuplicateStateVariable(String),
    #[error("state vector has {got} values, state space has {expected}")]
    StateLengthMismatch { expected: usize, got: usize },
    #[error("explanation references {0}, which is not part of the task")]
    DanglingExplanation(String),
    #[error("invalid explanation item: {0}")]
    InvalidExplanation(String),
}

/// Trims and collapses internal whitespace, keeping case.
pub fn clean_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Matching key: cleaned and lowercased.
pub fn norm_key(text: &str) -> String {
    clean_text(text).to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentType {
    Action,
    Activity,
    Object,
    Location,
    State,
}

impl ComponentType {
    pub const ALL: [ComponentType; 5] = [
        ComponentType::Action,
        ComponentType::Activity,
        ComponentType::Object,
        ComponentType::Location,
        ComponentType::State,
    ];

    /// The four types a task component can have.
    pub const TASK: [ComponentType; 4] = [
        ComponentType::Action,
        ComponentType::Activity,
        ComponentType::Object,
        ComponentType::Location,
    ];

    pub fn index(self) -> usize {
        match self {
            ComponentType::Action => 0,
            ComponentType::Activity => 1,
            ComponentType::Object => 2,
            ComponentType::Location => 3,
            ComponentType::State => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentType::Action => "action",
            ComponentType::Activity => "activity",
            ComponentType::Object => "object",
            ComponentType::Location => "location",
            ComponentType::State => "state",
        }
    }

    /// Word used when talking about a component of this type in prose.
    pub fn type_word(self) -> &'static str {
        match self {
            ComponentType::State => "state variable",
            other => other.as_str(),
        }
    }

    pub fn is_task_component(self) -> bool {
        self != ComponentType::State
    }
}

impl fmt::Display for ComponentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = norm_key(s);
        ComponentType::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| DomainError::UnknownComponentType(s.to_string()))
    }
}

/// A task the robot might perform, described by free-text components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub id: String,
    pub action: String,
    pub activity: String,
    pub objects: Vec<String>,
    pub locations: Vec<String>,
}

impl TaskDescription {
    pub fn new(
        id: impl Into<String>,
        action: impl Into<String>,
        activity: impl Into<String>,
        objects: &[&str],
        locations: &[&str],
    ) -> Self {
        Self {
            id: id.into(),
            action: action.into(),
            activity: activity.into(),
            objects: objects.iter().map(|s| s.to_string()).collect(),
            locations: locations.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Components in canonical order: action, activity, objects, locations.
    pub fn components(&self) -> impl Iterator<Item = (ComponentType, &str)> {
        std::iter::once((ComponentType::Action, self.action.as_str()))
            .chain(std::iter::once((ComponentType::Activity, self.activity.as_str())))
            .chain(self.objects.iter().map(|o| (ComponentType::Object, o.as_str())))
            .chain(self.locations.iter().map(|l| (ComponentType::Location, l.as_str())))
    }

    pub fn component_count(&self) -> usize {
        2 + self.objects.len() + self.locations.len()
    }

    /// Returns the display text of the matching component, if any.
    pub fn find_component(&self, component_type: ComponentType, text: &str) -> Option<&str> {
        let key = norm_key(text);
        self.components()
            .find(|(t, c)| *t == component_type && norm_key(c) == key)
            .map(|(_, c)| c)
    }
}

fn clean_list(items: &[String], kind: ComponentType) -> Result<Vec<String>, DomainError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let cleaned = clean_text(item);
        if cleaned.is_empty() {
            return Err(DomainError::EmptyComponent(kind));
        }
        let key = cleaned.to_lowercase();
        if !seen.insert(key.clone()) {
            return Err(DomainError::DuplicateComponent(key));
        }
        out.push(cleaned);
    }
    Ok(out)
}

/// Normalizes whitespace in every field and rejects empty or duplicated
/// components.
pub fn validate_task(t: &TaskDescription) -> Result<TaskDescription, DomainError> {
    let action = clean_text(&t.action);
    if action.is_empty() {
        return Err(DomainError::EmptyAction);
    }
    let activity = clean_text(&t.activity);
    if activity.is_empty() {
        return Err(DomainError::EmptyActivity);
    }
    Ok(TaskDescription {
        id: clean_text(&t.id),
        action,
        activity,
        objects: clean_list(&t.objects, ComponentType::Object)?,
        locations: clean_list(&t.locations, ComponentType::Location)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdaptationLabel {
    DoNow,
    DoLater,
    Remind,
    NoAction,
}

impl AdaptationLabel {
    /// Enum order; also the prediction tie-break order.
    pub const ALL: [AdaptationLabel; 4] = [
        AdaptationLabel::DoNow,
        AdaptationLabel::DoLater,
        AdaptationLabel::Remind,
        AdaptationLabel::NoAction,
    ];

    pub fn index(self) -> usize {
        match self {
            AdaptationLabel::DoNow => 0,
            AdaptationLabel::DoLater => 1,
            AdaptationLabel::Remind => 2,
            AdaptationLabel::NoAction => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdaptationLabel::DoNow => "do_now",
            AdaptationLabel::DoLater => "do_later",
            AdaptationLabel::Remind => "remind",
            AdaptationLabel::NoAction => "no_action",
        }
    }
}

impl fmt::Display for AdaptationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Case-insensitive parse of the canonical label forms.
pub fn parse_adaptation_label(text: &str) -> Result<AdaptationLabel, DomainError> {
    let key = norm_key(text);
    AdaptationLabel::ALL
        .into_iter()
        .find(|l| l.as_str() == key)
        .ok_or_else(|| DomainError::UnknownLabel(text.to_string()))
}

impl FromStr for AdaptationLabel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_adaptation_label(s)
    }
}

impl Serialize for AdaptationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AdaptationLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_adaptation_label(&s).map_err(serde::de::Error::custom)
    }
}

/// Ordered set of binary world-state variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    variables: Vec<String>,
}

impl StateSpace {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, DomainError> {
        let mut seen = std::collections::HashSet::new();
        let mut variables = Vec::with_capacity(names.len());
        for name in names {
            let cleaned = clean_text(name.as_ref());
            if cleaned.is_empty() || !seen.insert(cleaned.to_lowercase()) {
                return Err(DomainError::DuplicateStateVariable(cleaned));
            }
            variables.push(cleaned);
        }
        Ok(Self { variables })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let key = norm_key(name);
        self.variables.iter().position(|v| v.to_lowercase() == key)
    }

    pub fn require(&self, name: &str) -> Result<usize, DomainError> {
        self.index_of(name)
            .ok_or_else(|| DomainError::UnknownVariable(name.to_string()))
    }
}

/// Concrete assignment of every state variable, aligned to a [`StateSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVector {
    pub values: Vec<bool>,
}

impl StateVector {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn all_false(space: &StateSpace) -> Self {
        Self { values: vec![false; space.len()] }
    }

    pub fn check(&self, space: &StateSpace) -> Result<(), DomainError> {
        if self.values.len() != space.len() {
            return Err(DomainError::StateLengthMismatch {
                expected: space.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }

    /// Names of the variables that are true.
    pub fn active<'a>(&self, space: &'a StateSpace) -> Vec<&'a str> {
        space
            .variables()
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| **v)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Partial assignment of state variables: where a preference applies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateConstraint {
    pub bindings: BTreeMap<String, bool>,
}

impl StateConstraint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: bool) -> Self {
        self.bindings.insert(clean_text(name), value);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn validate(&self, space: &StateSpace) -> Result<(), DomainError> {
        for name in self.bindings.keys() {
            space.require(name)?;
        }
        Ok(())
    }

    /// Resolved (index, value) pairs.
    pub fn resolve(&self, space: &StateSpace) -> Result<Vec<(usize, bool)>, DomainError> {
        self.bindings
            .iter()
            .map(|(name, v)| space.require(name).map(|i| (i, *v)))
            .collect()
    }
}

/// True iff every binding of `c` holds in `s`.
pub fn state_satisfies(
    space: &StateSpace,
    s: &StateVector,
    c: &StateConstraint,
) -> Result<bool, DomainError> {
    s.check(space)?;
    for (i, v) in c.resolve(space)? {
        if s.values[i] != v {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One element of a user's (or the model's) explanation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplanationItem {
    Component {
        component: String,
        component_type: ComponentType,
        concept: String,
    },
    State {
        state_variable: String,
    },
}

impl ExplanationItem {
    pub fn component(component: &str, component_type: ComponentType, concept: &str) -> Self {
        ExplanationItem::Component {
            component: clean_text(component),
            component_type,
            concept: clean_text(concept),
        }
    }

    pub fn state(name: &str) -> Self {
        ExplanationItem::State { state_variable: clean_text(name) }
    }

    /// Normalized comparison.
    pub fn matches(&self, other: &ExplanationItem) -> bool {
        match (self, other) {
            (
                ExplanationItem::Component { component: a, component_type: ta, concept: ca },
                ExplanationItem::Component { component: b, component_type: tb, concept: cb },
            ) => ta == tb && norm_key(a) == norm_key(b) && norm_key(ca) == norm_key(cb),
            (
                ExplanationItem::State { state_variable: a },
                ExplanationItem::State { state_variable: b },
            ) => norm_key(a) == norm_key(b),
            _ => false,
        }
    }

    /// Checks the item against a task and state space.
    pub fn validate(&self, task: &TaskDescription, space: &StateSpace) -> Result<(), DomainError> {
        match self {
            ExplanationItem::Component { component, component_type, concept } => {
                if !component_type.is_task_component() {
                    return Err(DomainError::InvalidExplanation(format!(
                        "component form cannot use type {component_type}"
                    )));
                }
                if clean_text(concept).is_empty() {
                    return Err(DomainError::InvalidExplanation(format!(
                        "empty concept for {component}"
                    )));
                }
                if task.find_component(*component_type, component).is_none() {
                    return Err(DomainError::DanglingExplanation(format!(
                        "{component_type} '{component}'"
                    )));
                }
                Ok(())
            }
            ExplanationItem::State { state_variable } => {
                space.require(state_variable).map(|_| ())
            }
        }
    }
}

/// One user datapoint: preferred adaptation for a task, optionally limited
/// to a region of the state space and justified by explanation items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSample {
    pub task: TaskDescription,
    pub adaptation: AdaptationLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<StateConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<Vec<ExplanationItem>>,
}

impl FeedbackSample {
    pub fn new(task: TaskDescription, adaptation: AdaptationLabel) -> Self {
        Self { task, adaptation, constraint: None, explanation: None }
    }

    pub fn with_constraint(mut self, c: StateConstraint) -> Self {
        self.constraint = Some(c);
        self
    }

    pub fn with_explanation(mut self, items: Vec<ExplanationItem>) -> Self {
        self.explanation = Some(items);
        self
    }

    pub fn validate(&self, space: &StateSpace) -> Result<(), DomainError> {
        if let Some(c) = &self.constraint {
            c.validate(space)?;
        }
        for item in self.explanation.iter().flatten() {
            item.validate(&self.task, space)?;
        }
        Ok(())
    }

    pub fn has_explanation(&self) -> bool {
        self.explanation.as_ref().is_some_and(|e| !e.is_empty())
    }

    /// Explanation items plus one state item per constrained variable.
    pub fn ground_truth_set(&self) -> Vec<ExplanationItem> {
        let mut out: Vec<ExplanationItem> = self.explanation.clone().unwrap_or_default();
        if let Some(c) = &self.constraint {
            for name in c.bindings.keys() {
                let item = ExplanationItem::state(name);
                if !out.iter().any(|o| o.matches(&item)) {
                    out.push(item);
                }
            }
        }
        out
    }
}
