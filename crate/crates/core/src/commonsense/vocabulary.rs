use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CommonsenseError;
use crate::domain::{clean_text, norm_key, ComponentType, ExplanationItem, FeedbackSample};

const BASE_CONCEPTS: &str = include_str!("../../data/base_concepts.json");

/// An abstract property a task component may have, e.g. "involves an open flame".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub text: String,
    pub component_type: ComponentType,
}

impl Concept {
    pub fn new(text: &str, component_type: ComponentType) -> Self {
        Self { text: clean_text(text), component_type }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Base,
    UserAdded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub text: String,
    pub provenance: Provenance,
}

/// Per-type concept lists in fixed order (the order tokens are built in).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptVocabulary {
    lists: [Vec<VocabEntry>; 4],
}

/// On-disk shape shared by the factory file and persona files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptLists {
    #[serde(default)]
    pub action: Vec<String>,
    #[serde(default)]
    pub activity: Vec<String>,
    #[serde(default)]
    pub object: Vec<String>,
    #[serde(default)]
    pub location: Vec<String>,
}

impl ConceptVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The factory vocabulary shipped with the crate.
    pub fn base() -> Self {
        let lists: ConceptLists =
            serde_json::from_str(BASE_CONCEPTS).expect("bundled base vocabulary is valid JSON");
        Self::from_lists(&lists, Provenance::Base)
    }

    pub fn load(path: &Path) -> Result<Self, CommonsenseError> {
        let text = std::fs::read_to_string(path)?;
        let lists: ConceptLists = serde_json::from_str(&text)
            .map_err(|e| CommonsenseError::Parse(format!("{}: {e}", path.display())))?;
        Ok(Self::from_lists(&lists, Provenance::Base))
    }

    pub fn from_lists(lists: &ConceptLists, provenance: Provenance) -> Self {
        let mut v = Self::new();
        for (t, items) in [
            (ComponentType::Action, &lists.action),
            (ComponentType::Activity, &lists.activity),
            (ComponentType::Object, &lists.object),
            (ComponentType::Location, &lists.location),
        ] {
            for text in items {
                v.insert(&Concept::new(text, t), provenance);
            }
        }
        v
    }

    pub fn to_lists(&self) -> ConceptLists {
        let texts = |t: ComponentType| self.concepts(t).iter().map(|e| e.text.clone()).collect();
        ConceptLists {
            action: texts(ComponentType::Action),
            activity: texts(ComponentType::Activity),
            object: texts(ComponentType::Object),
            location: texts(ComponentType::Location),
        }
    }

    pub fn concepts(&self, t: ComponentType) -> &[VocabEntry] {
        match t {
            ComponentType::State => &[],
            other => &self.lists[other.index()],
        }
    }

    pub fn contains(&self, t: ComponentType, text: &str) -> bool {
        self.position(t, text).is_some()
    }

    pub fn position(&self, t: ComponentType, text: &str) -> Option<usize> {
        let key = norm_key(text);
        self.concepts(t).iter().position(|e| norm_key(&e.text) == key)
    }

    /// Appends the concept unless an equal (type, normalized text) exists.
    pub fn insert(&mut self, concept: &Concept, provenance: Provenance) -> bool {
        if !concept.component_type.is_task_component()
            || concept.text.is_empty()
            || self.contains(concept.component_type, &concept.text)
        {
            return false;
        }
        self.lists[concept.component_type.index()]
            .push(VocabEntry { text: concept.text.clone(), provenance });
        true
    }

    /// All concepts, in type order then list order.
    pub fn iter(&self) -> impl Iterator<Item = Concept> + '_ {
        ComponentType::TASK.into_iter().flat_map(move |t| {
            self.concepts(t).iter().map(move |e| Concept { text: e.text.clone(), component_type: t })
        })
    }

    pub fn len(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same concepts in the same order, regardless of provenance.
    pub fn same_concepts(&self, other: &ConceptVocabulary) -> bool {
        ComponentType::TASK.into_iter().all(|t| {
            let a = self.concepts(t);
            let b = other.concepts(t);
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| norm_key(&x.text) == norm_key(&y.text))
        })
    }
}

/// Appends every concept named in the feedback explanations that the
/// vocabulary lacks. Returns the extended vocabulary and the additions.
pub fn extend_vocabulary(
    vocab: &ConceptVocabulary,
    feedback: &[FeedbackSample],
) -> (ConceptVocabulary, Vec<Concept>) {
    let mut out = vocab.clone();
    let mut added = Vec::new();
    for item in feedback.iter().filter_map(|s| s.explanation.as_ref()).flatten() {
        if let ExplanationItem::Component { component_type, concept, .. } = item {
            let c = Concept::new(concept, *component_type);
            if out.insert(&c, Provenance::UserAdded) {
                added.push(c);
            }
        }
    }
    (out, added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AdaptationLabel, TaskDescription};

    fn arranging_task() -> TaskDescription {
        TaskDescription::new(
            "pots",
            "arranging pots and pans in the kitchen shelves",
            "organizing the kitchen",
            &["pots", "pans", "kitchen shelves"],
            &["kitchen"],
        )
    }

    #[test]
    fn base_vocabulary_has_paper_table_concepts() {
        let v = ConceptVocabulary::base();
        assert!(v.contains(ComponentType::Object, "can easily hurt someone without intending to"));
        assert!(v.contains(ComponentType::Object, "involves an open flame"));
        assert!(v.contains(ComponentType::Action, "is very tiring"));
        assert!(v.contains(ComponentType::Activity, "falls under food preparation tasks"));
        assert!(v.len() >= 20);
    }

    #[test]
    fn extend_adds_new_concepts_once() {
        let mut base = ConceptVocabulary::new();
        base.insert(&Concept::new("is very tiring", ComponentType::Action), Provenance::Base);
        let item = ExplanationItem::component(
            "arranging pots and pans in the kitchen shelves",
            ComponentType::Action,
            "makes a lot of noise",
        );
        let s = FeedbackSample::new(arranging_task(), AdaptationLabel::DoLater)
            .with_explanation(vec![item.clone()]);
        let (v, added) = extend_vocabulary(&base, &[s.clone(), s]);
        assert_eq!(added, vec![Concept::new("makes a lot of noise", ComponentType::Action)]);
        let actions = v.concepts(ComponentType::Action);
        assert_eq!(actions.len(), 2);
        assert_eq!(actions[0].text, "is very tiring");
        assert_eq!(actions[1].provenance, Provenance::UserAdded);
    }

    #[test]
    fn extend_is_identity_when_covered() {
        let base = ConceptVocabulary::base();
        let s = FeedbackSample::new(arranging_task(), AdaptationLabel::DoLater).with_explanation(vec![
            ExplanationItem::component("pots", ComponentType::Object, "Is  Fragile"),
        ]);
        let (v, added) = extend_vocabulary(&base, &[s]);
        assert!(added.is_empty());
        assert_eq!(v, base);
    }
}
