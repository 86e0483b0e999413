//! Personas with a known answer: components have ground-truth concept
//! memberships and the user's preferences are an ordered rule list over
//! those concepts and the state.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PersonaDataset, PersonaTask};
use crate::commonsense::{Concept, ConceptLists, ConceptVocabulary, Provenance, ScoreCacheEntry};
use crate::domain::{
    norm_key, AdaptationLabel, ComponentType, ExplanationItem, FeedbackSample, StateConstraint, StateSpace,
    StateVector, TaskDescription,
};

/// Scorer id of cache entries that reproduce the truth table exactly.
pub const ORACLE_SCORER: &str = "oracle-v1";
/// Scorer id of cache entries with flipped cells.
pub const NOISY_SCORER: &str = "noisy-v1";

/// Size knobs for [`SyntheticSpec::sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShape {
    pub tasks: usize,
    pub activities: usize,
    pub objects: usize,
    pub locations: usize,
    pub max_objects_per_task: usize,
    pub max_locations_per_task: usize,
    pub state_variables: Vec<String>,
    /// Concepts added to the factory vocabulary.
    pub extra_concepts: ConceptLists,
    pub rules: usize,
    /// How many of the rules (the first ones) carry a state condition.
    pub state_conditioned_rules: usize,
    /// Probability that a component has a concept used by a rule.
    pub rule_density: f64,
    /// Probability that a component has any other concept.
    pub distractor_density: f64,
    /// Share of rule-labelled samples that carry an explanation.
    pub explanation_fraction: f64,
}

impl Default for SyntheticShape {
    fn default() -> Self {
        Self {
            tasks: 60,
            activities: 25,
            objects: 60,
            locations: 10,
            max_objects_per_task: 3,
            max_locations_per_task: 2,
            state_variables: [
                "weekend",
                "morning",
                "user_home",
                "guests_present",
                "user_asleep",
                "user_in_rush",
                "kids_present",
                "adverse_weather",
            ]
            .map(String::from)
            .to_vec(),
            extra_concepts: ConceptLists {
                action: vec![],
                activity: vec!["is usually done in the morning".into()],
                object: vec!["is expensive".into()],
                location: vec!["is near where the user sleeps".into()],
            },
            rules: 6,
            state_conditioned_rules: 2,
            rule_density: 0.3,
            distractor_density: 0.25,
            explanation_fraction: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticRule {
    /// All must hold, each for at least one component of the concept's type.
    pub concepts: Vec<Concept>,
    pub state: Option<(String, bool)>,
    pub label: AdaptationLabel,
}

/// The concepts a component truly has.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub component_type: ComponentType,
    pub component: String,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub persona_id: String,
    pub state_variables: Vec<String>,
    pub concepts: ConceptLists,
    /// Action pool: one action per task.
    pub actions: Vec<String>,
    pub activities: Vec<String>,
    pub objects: Vec<String>,
    pub locations: Vec<String>,
    pub max_objects_per_task: usize,
    pub max_locations_per_task: usize,
    pub truth: Vec<TruthRow>,
    /// First match wins; `default_label` when none matches.
    pub rules: Vec<SyntheticRule>,
    pub default_label: AdaptationLabel,
    pub task_count: usize,
    pub explanation_fraction: f64,
}

/// Which rule produced each generated sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub task_id: String,
    pub sample: usize,
    pub rule: Option<usize>,
    pub label: AdaptationLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPersona {
    pub spec: SyntheticSpec,
    pub dataset: PersonaDataset,
    pub oracle_cache: Vec<ScoreCacheEntry>,
    pub trace: Vec<TraceEntry>,
}

impl SyntheticSpec {
    /// Draws pools, a truth table and a rule list from `seed`.
    pub fn sample(seed: u64, shape: &SyntheticShape) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vocab = ConceptVocabulary::base();
        for c in ConceptVocabulary::from_lists(&shape.extra_concepts, Provenance::Base).iter() {
            vocab.insert(&c, Provenance::Base);
        }
        let concepts = vocab.to_lists();
        let pool = |kind: &str, n: usize| (1..=n).map(|i| format!("{kind} {seed}-{i}")).collect::<Vec<_>>();
        let actions = pool("action", shape.tasks);
        let activities = pool("activity", shape.activities);
        let objects = pool("object", shape.objects);
        let locations = pool("location", shape.locations);

        let mut all: Vec<Concept> = vocab.iter().collect();
        all.shuffle(&mut rng);
        let rule_concepts: Vec<Concept> = all.iter().take(shape.rules).cloned().collect();
        let mut labels = [AdaptationLabel::NoAction, AdaptationLabel::Remind, AdaptationLabel::DoLater]
            .into_iter()
            .cycle()
            .take(shape.rules)
            .collect::<Vec<_>>();
        labels.shuffle(&mut rng);
        let rules = rule_concepts
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (c, label))| SyntheticRule {
                concepts: vec![c.clone()],
                state: (i < shape.state_conditioned_rules).then(|| {
                    let v = shape.state_variables.choose(&mut rng).expect("state variables").clone();
                    (v, rng.gen_bool(0.5))
                }),
                label,
            })
            .collect();

        let rule_keys: BTreeSet<(ComponentType, String)> =
            rule_concepts.iter().map(|c| (c.component_type, norm_key(&c.text))).collect();
        let mut truth = Vec::new();
        for (t, members) in [
            (ComponentType::Action, &actions),
            (ComponentType::Activity, &activities),
            (ComponentType::Object, &objects),
            (ComponentType::Location, &locations),
        ] {
            for m in members {
                let concepts = vocab
                    .concepts(t)
                    .iter()
                    .filter(|e| {
                        let p = if rule_keys.contains(&(t, norm_key(&e.text))) {
                            shape.rule_density
                        } else {
                            shape.distractor_density
                        };
                        rng.gen_bool(p)
                    })
                    .map(|e| e.text.clone())
                    .collect();
                truth.push(TruthRow { component_type: t, component: m.clone(), concepts });
            }
        }
        Self {
            seed,
            persona_id: format!("synthetic-{seed}"),
            state_variables: shape.state_variables.clone(),
            concepts,
            actions,
            activities,
            objects,
            locations,
            max_objects_per_task: shape.max_objects_per_task.max(1),
            max_locations_per_task: shape.max_locations_per_task.max(1),
            truth,
            rules,
            default_label: AdaptationLabel::DoNow,
            task_count: shape.tasks,
            explanation_fraction: shape.explanation_fraction,
        }
    }

    fn truth_map(&self) -> BTreeMap<(ComponentType, String), BTreeSet<String>> {
        self.truth
            .iter()
            .map(|r| ((r.component_type, norm_key(&r.component)), r.concepts.iter().map(|c| norm_key(c)).collect()))
            .collect()
    }

    /// Whether `component` truly has `concept`.
    pub fn has_concept(&self, component_type: ComponentType, component: &str, concept: &str) -> bool {
        self.truth.iter().any(|r| {
            r.component_type == component_type
                && norm_key(&r.component) == norm_key(component)
                && r.concepts.iter().any(|c| norm_key(c) == norm_key(concept))
        })
    }

    /// Components of `task` that satisfy each of the rule's concepts, or
    /// `None` if some concept is unsatisfied.
    fn witnesses(&self, task: &TaskDescription, rule: &SyntheticRule) -> Option<Vec<ExplanationItem>> {
        let mut items = Vec::new();
        for c in &rule.concepts {
            let hits: Vec<ExplanationItem> = task
                .components()
                .filter(|(t, comp)| *t == c.component_type && self.has_concept(*t, comp, &c.text))
                .map(|(t, comp)| ExplanationItem::component(comp, t, &c.text))
                .collect();
            if hits.is_empty() {
                return None;
            }
            items.extend(hits);
        }
        Some(items)
    }

    /// Ground-truth label for a concrete state: the first matching rule.
    pub fn label_for(&self, task: &TaskDescription, space: &StateSpace, state: &StateVector) -> (AdaptationLabel, Option<usize>) {
        for (i, r) in self.rules.iter().enumerate() {
            if self.witnesses(task, r).is_none() {
                continue;
            }
            let state_ok = match &r.state {
                None => true,
                Some((v, b)) => space.index_of(v).is_some_and(|idx| state.values[idx] == *b),
            };
            if state_ok {
                return (r.label, Some(i));
            }
        }
        (self.default_label, None)
    }

    /// Partitions the state space for a task into regions of constant label.
    fn regions(&self, task: &TaskDescription) -> Vec<(BTreeMap<String, bool>, AdaptationLabel, Option<usize>)> {
        let mut region: BTreeMap<String, bool> = BTreeMap::new();
        let mut out = Vec::new();
        for (i, r) in self.rules.iter().enumerate() {
            if self.witnesses(task, r).is_none() {
                continue;
            }
            match &r.state {
                None => {
                    out.push((region, r.label, Some(i)));
                    return out;
                }
                Some((v, b)) => match region.get(v) {
                    Some(x) if x == b => {
                        out.push((region, r.label, Some(i)));
                        return out;
                    }
                    Some(_) => {}
                    None => {
                        let mut inside = region.clone();
                        inside.insert(v.clone(), *b);
                        out.push((inside, r.label, Some(i)));
                        region.insert(v.clone(), !b);
                    }
                },
            }
        }
        out.push((region, self.default_label, None));
        out
    }
}

/// Samples tasks and labels them by the spec's rules; fully determined by
/// `spec.seed`.
pub fn generate_synthetic_persona(spec: &SyntheticSpec) -> SyntheticPersona {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let state_space = StateSpace::new(&spec.state_variables).expect("synthetic state variables are distinct");
    let mut tasks = Vec::with_capacity(spec.task_count);
    let mut trace = Vec::new();
    for (ti, action) in spec.actions.iter().take(spec.task_count).enumerate() {
        let activity = spec.activities.choose(&mut rng).expect("activity pool").clone();
        let n_obj = rng.gen_range(1..=spec.max_objects_per_task.min(spec.objects.len()));
        let objects: Vec<&str> = spec.objects.choose_multiple(&mut rng, n_obj).map(String::as_str).collect();
        let n_loc = rng.gen_range(1..=spec.max_locations_per_task.min(spec.locations.len()));
        let locations: Vec<&str> = spec.locations.choose_multiple(&mut rng, n_loc).map(String::as_str).collect();
        let task = TaskDescription::new(format!("task-{}", ti + 1), action.clone(), activity, &objects, &locations);
        let mut feedback = Vec::new();
        for (si, (bindings, label, rule)) in spec.regions(&task).into_iter().enumerate() {
            let mut sample = FeedbackSample::new(task.clone(), label);
            if !bindings.is_empty() {
                sample = sample.with_constraint(StateConstraint { bindings });
            }
            if let Some(ri) = rule {
                // draw unconditionally so the stream does not depend on the fraction
                let explain = rng.gen::<f64>() < spec.explanation_fraction;
                if explain {
                    sample = sample.with_explanation(spec.witnesses(&task, &spec.rules[ri]).expect("rule matched"));
                }
            }
            trace.push(TraceEntry { task_id: task.id.clone(), sample: si, rule, label });
            feedback.push(sample);
        }
        tasks.push(PersonaTask { task, feedback });
    }
    let vocabulary = ConceptVocabulary::from_lists(&spec.concepts, Provenance::Base);
    let oracle_cache = truth_cache_entries(spec, &vocabulary, ORACLE_SCORER, |_| false);
    SyntheticPersona {
        spec: spec.clone(),
        dataset: PersonaDataset { persona_id: spec.persona_id.clone(), state_space, vocabulary, tasks },
        oracle_cache,
        trace,
    }
}

fn truth_cache_entries(
    spec: &SyntheticSpec,
    vocab: &ConceptVocabulary,
    scorer: &str,
    mut flip: impl FnMut(&(ComponentType, String, String)) -> bool,
) -> Vec<ScoreCacheEntry> {
    let truth = spec.truth_map();
    let mut out = Vec::new();
    for row in &spec.truth {
        let t = row.component_type;
        let known = &truth[&(t, norm_key(&row.component))];
        for concept in vocab.concepts(t) {
            let mut value = known.contains(&norm_key(&concept.text));
            if flip(&(t, row.component.clone(), concept.text.clone())) {
                value = !value;
            }
            out.push(ScoreCacheEntry::new(scorer, t, &row.component, &concept.text, if value { 10 } else { 1 }));
        }
    }
    out
}

/// The truth table as cache entries with each cell independently flipped to
/// the opposite extreme with probability `flip_probability`.
pub fn noisy_cache_entries(spec: &SyntheticSpec, flip_probability: f64, seed: u64) -> Vec<ScoreCacheEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ConceptVocabulary::from_lists(&spec.concepts, Provenance::Base);
    truth_cache_entries(spec, &vocab, NOISY_SCORER, |_| rng.gen::<f64>() < flip_probability)
}
