//! Persona files, evaluation report files, and synthetic personas.

mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commonsense::{extend_vocabulary, ConceptLists, ConceptVocabulary, Provenance};
use crate::domain::{
    parse_adaptation_label, validate_task, ComponentType, DomainError, ExplanationItem, FeedbackSample,
    StateConstraint, StateSpace, TaskDescription,
};
use crate::evaluation::{EvaluationReport, REPORT_SCHEMA_VERSION};

pub use synthetic::{
    generate_synthetic_persona, noisy_cache_entries, SyntheticPersona, SyntheticRule, SyntheticShape, SyntheticSpec,
    TraceEntry, TruthRow, NOISY_SCORER, ORACLE_SCORER,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error in {field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("unknown adaptation label '{0}'")]
    UnknownLabel(String),
    #[error("explanation refers to {0}, which is not part of the task")]
    DanglingExplanation(String),
    #[error("unknown state variable '{0}'")]
    UnknownStateVariable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    fn schema(field: impl Into<String>, reason: impl ToString) -> Self {
        DataError::Schema { field: field.into(), reason: reason.to_string() }
    }

    fn from_domain(field: &str, e: DomainError) -> Self {
        match e {
            DomainError::UnknownLabel(l) => DataError::UnknownLabel(l),
            DomainError::DanglingExplanation(d) => DataError::DanglingExplanation(d),
            DomainError::UnknownVariable(v) => DataError::UnknownStateVariable(v),
            other => DataError::schema(field, other),
        }
    }
}

/// One task with all the feedback a user gave on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaTask {
    pub task: TaskDescription,
    pub feedback: Vec<FeedbackSample>,
}

/// Everything known about one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaDataset {
    pub persona_id: String,
    pub state_space: StateSpace,
    pub vocabulary: ConceptVocabulary,
    pub tasks: Vec<PersonaTask>,
}

impl PersonaDataset {
    /// All feedback samples in file order.
    pub fn samples(&self) -> Vec<FeedbackSample> {
        self.tasks.iter().flat_map(|t| t.feedback.iter().cloned()).collect()
    }

    pub fn task_descriptions(&self) -> Vec<TaskDescription> {
        self.tasks.iter().map(|t| t.task.clone()).collect()
    }

    pub fn sample_count(&self) -> usize {
        self.tasks.iter().map(|t| t.feedback.len()).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonaFile {
    persona_id: String,
    state_variables: Vec<String>,
    #[serde(default)]
    concepts: ConceptLists,
    #[serde(default)]
    tasks: Vec<TaskRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    id: String,
    action: String,
    activity: String,
    #[serde(default)]
    objects: Vec<String>,
    #[serde(default)]
    locations: Vec<String>,
    #[serde(default)]
    feedback: Vec<FeedbackRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRecord {
    adaptation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_constraint: Option<BTreeMap<String, bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanation: Option<Vec<ExplanationRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ExplanationRecord {
    Component { component: String, component_type: String, concept: String },
    State { state_variable: String },
}

/// Parses and validates a persona document. Concepts named by explanations
/// but missing from the concept lists are added as user concepts.
pub fn parse_persona(text: &str) -> Result<PersonaDataset, DataError> {
    let file: PersonaFile = serde_json::from_str(text).map_err(|e| DataError::schema("document", e))?;
    let state_space =
        StateSpace::new(&file.state_variables).map_err(|e| DataError::from_domain("state_variables", e))?;
    let mut tasks = Vec::with_capacity(file.tasks.len());
    for (ti, record) in file.tasks.into_iter().enumerate() {
        let field = format!("tasks[{ti}]");
        let objects: Vec<&str> = record.objects.iter().map(String::as_str).collect();
        let locations: Vec<&str> = record.locations.iter().map(String::as_str).collect();
        let task = validate_task(&TaskDescription::new(record.id, record.action, record.activity, &objects, &locations))
            .map_err(|e| DataError::from_domain(&field, e))?;
        let mut feedback = Vec::with_capacity(record.feedback.len());
        for (fi, fb) in record.feedback.into_iter().enumerate() {
            let field = format!("{field}.feedback[{fi}]");
            let label = parse_adaptation_label(&fb.adaptation).map_err(|e| DataError::from_domain(&field, e))?;
            let mut sample = FeedbackSample::new(task.clone(), label);
            if let Some(bindings) = fb.state_constraint {
                sample = sample.with_constraint(StateConstraint { bindings });
            }
            if let Some(items) = fb.explanation {
                let items = items
                    .into_iter()
                    .map(|item| match item {
                        ExplanationRecord::Component { component, component_type, concept } => {
                            let t: ComponentType = component_type
                                .parse()
                                .map_err(|e| DataError::schema(format!("{field}.explanation"), e))?;
                            Ok(ExplanationItem::component(&component, t, &concept))
                        }
                        ExplanationRecord::State { state_variable } => Ok(ExplanationItem::state(&state_variable)),
                    })
                    .collect::<Result<Vec<_>, DataError>>()?;
                sample = sample.with_explanation(items);
            }
            sample.validate(&state_space).map_err(|e| DataError::from_domain(&field, e))?;
            feedback.push(sample);
        }
        tasks.push(PersonaTask { task, feedback });
    }
    let base = ConceptVocabulary::from_lists(&file.concepts, Provenance::Base);
    let all: Vec<FeedbackSample> = tasks.iter().flat_map(|t| t.feedback.iter().cloned()).collect();
    let (vocabulary, _) = extend_vocabulary(&base, &all);
    Ok(PersonaDataset { persona_id: file.persona_id, state_space, vocabulary, tasks })
}

pub fn load_persona(path: &Path) -> Result<PersonaDataset, DataError> {
    parse_persona(&std::fs::read_to_string(path)?)
}

/// Serializes a persona. Only base concepts are listed; user concepts are
/// re-derived from the explanations on load.
pub fn persona_to_string(persona: &PersonaDataset) -> String {
    let base: Vec<(ComponentType, String)> = ComponentType::TASK
        .into_iter()
        .flat_map(|t| {
            persona
                .vocabulary
                .concepts(t)
                .iter()
                .filter(|e| e.provenance == Provenance::Base)
                .map(move |e| (t, e.text.clone()))
        })
        .collect();
    let mut concepts = ConceptLists::default();
    for (t, text) in base {
        match t {
            ComponentType::Action => concepts.action.push(text),
            ComponentType::Activity => concepts.activity.push(text),
            ComponentType::Object => concepts.object.push(text),
            ComponentType::Location => concepts.location.push(text),
            ComponentType::State => {}
        }
    }
    let tasks = persona
        .tasks
        .iter()
        .map(|pt| TaskRecord {
            id: pt.task.id.clone(),
            action: pt.task.action.clone(),
            activity: pt.task.activity.clone(),
            objects: pt.task.objects.clone(),
            locations: pt.task.locations.clone(),
            feedback: pt
                .feedback
                .iter()
                .map(|s| FeedbackRecord {
                    adaptation: s.adaptation.as_str().to_string(),
                    state_constraint: s.constraint.as_ref().map(|c| c.bindings.clone()),
                    explanation: s.explanation.as_ref().map(|items| {
                        items
                            .iter()
                            .map(|i| match i {
                                ExplanationItem::Component { component, component_type, concept } => {
                                    ExplanationRecord::Component {
                                        component: component.clone(),
                                        component_type: component_type.as_str().to_string(),
                                        concept: concept.clone(),
                                    }
                                }
                                ExplanationItem::State { state_variable } => {
                                    ExplanationRecord::State { state_variable: state_variable.clone() }
                                }
                            })
                            .collect()
                    }),
                })
                .collect(),
        })
        .collect();
    let file = PersonaFile {
        persona_id: persona.persona_id.clone(),
        state_variables: persona.state_space.variables().to_vec(),
        concepts,
        tasks,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("persona serializes");
    s.push('\n');
    s
}

pub fn save_persona(persona: &PersonaDataset, path: &Path) -> Result<(), DataError> {
    write_atomic(path, persona_to_string(persona).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn report_to_string(report: &EvaluationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<EvaluationReport, DataError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DataError::schema("document", e))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == REPORT_SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(DataError::schema("schema_version", format!("unsupported version {v}"))),
        None => return Err(DataError::schema("schema_version", "missing")),
    }
    serde_json::from_value(value).map_err(|e| DataError::schema("document", e))
}

pub fn write_report(report: &EvaluationReport, path: &Path) -> Result<(), DataError> {
    write_atomic(path, report_to_string(report).as_bytes())
}

pub fn read_report(path: &Path) -> Result<EvaluationReport, DataError> {
    parse_report(&std::fs::read_to_string(path)?)
}
