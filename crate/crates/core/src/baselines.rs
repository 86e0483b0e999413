//! Comparison systems: hand-written style rules induced from explanations,
//! and a few-shot prompted language model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commonsense::{CompletionClient, TransportError};
use crate::domain::{
    clean_text, norm_key, parse_adaptation_label, AdaptationLabel, ComponentType, ExplanationItem, FeedbackSample,
    StateSpace, StateVector, TaskDescription,
};
use crate::personalization::TokenRef;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no adaptation label found in response: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// "If the task has this component (and the state matches), respond so."
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub component_type: ComponentType,
    /// Normalized component text.
    pub component: String,
    pub state_condition: Option<(String, bool)>,
    pub label: AdaptationLabel,
    /// Task the rule was learned from.
    pub source: String,
}

impl Rule {
    fn condition(&self) -> (ComponentType, &str, Option<&(String, bool)>, AdaptationLabel) {
        (self.component_type, &self.component, self.state_condition.as_ref(), self.label)
    }

    pub fn applies(&self, task: &TaskDescription, space: &StateSpace, state: &StateVector) -> bool {
        let component_ok = task.components().any(|(t, c)| t == self.component_type && norm_key(c) == self.component);
        let state_ok = match &self.state_condition {
            None => true,
            Some((v, b)) => space.index_of(v).and_then(|i| state.values.get(i)).is_some_and(|x| x == b),
        };
        component_ok && state_ok
    }

    /// E.g. "Object electric drill is involved".
    pub fn describe(&self) -> String {
        let t = self.component_type.type_word();
        let mut s = format!("{}{} {} is involved", t[..1].to_uppercase(), &t[1..], self.component);
        if let Some((v, b)) = &self.state_condition {
            s.push_str(&format!(" and {v} is {b}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub default_label: AdaptationLabel,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self { rules: Vec::new(), default_label: AdaptationLabel::DoNow }
    }
}

/// One rule per explained component; constrained samples also yield a copy
/// of each rule per constrained variable.
pub fn induce_rules(train: &[FeedbackSample]) -> RuleSet {
    let mut set = RuleSet::default();
    for sample in train {
        let Some(items) = &sample.explanation else { continue };
        for item in items {
            let ExplanationItem::Component { component, component_type, .. } = item else { continue };
            let base = Rule {
                component_type: *component_type,
                component: norm_key(component),
                state_condition: None,
                label: sample.adaptation,
                source: sample.task.id.clone(),
            };
            let mut variants = vec![base.clone()];
            for (v, b) in sample.constraint.iter().flat_map(|c| c.bindings.iter()) {
                variants.push(Rule { state_condition: Some((v.clone(), *b)), ..base.clone() });
            }
            for r in variants {
                if !set.rules.iter().any(|x| x.condition() == r.condition()) {
                    set.rules.push(r);
                }
            }
        }
    }
    set
}

/// Most cautious first; breaks vote ties.
const CONSERVATIVENESS: [AdaptationLabel; 4] =
    [AdaptationLabel::NoAction, AdaptationLabel::Remind, AdaptationLabel::DoLater, AdaptationLabel::DoNow];

/// Majority vote over applicable rules; the default label when none apply.
pub fn rule_predict<'a>(
    rules: &'a RuleSet,
    task: &TaskDescription,
    space: &StateSpace,
    state: &StateVector,
) -> (AdaptationLabel, Option<&'a Rule>) {
    let applicable: Vec<&Rule> = rules.rules.iter().filter(|r| r.applies(task, space, state)).collect();
    if applicable.is_empty() {
        return (rules.default_label, None);
    }
    let mut votes: BTreeMap<AdaptationLabel, usize> = BTreeMap::new();
    for r in &applicable {
        *votes.entry(r.label).or_default() += 1;
    }
    let top = *votes.values().max().expect("nonempty");
    let label = CONSERVATIVENESS.into_iter().find(|l| votes.get(l) == Some(&top)).expect("some label has top votes");
    (label, applicable.into_iter().find(|r| r.label == label))
}

fn render_task(out: &mut String, task: &TaskDescription) {
    out.push_str(&format!("Action: {}\n", task.action));
    out.push_str(&format!("Activity: {}\n", task.activity));
    out.push_str(&format!("Objects: {}\n", task.objects.join(", ")));
    out.push_str(&format!("Locations: {}\n", task.locations.join(", ")));
}

fn render_item(item: &ExplanationItem) -> String {
    match item {
        ExplanationItem::Component { component, concept, .. } => format!("{component}: {concept}"),
        ExplanationItem::State { state_variable } => state_variable.clone(),
    }
}

/// Prompt listing every past answer, then the query and the answer format.
pub fn build_fewshot_prompt(
    history: &[FeedbackSample],
    task: &TaskDescription,
    space: &StateSpace,
    state: &StateVector,
) -> String {
    let mut p = String::new();
    p.push_str("A household robot must decide how to handle tasks for one particular user.\n");
    p.push_str("Possible responses: do_now, do_later, remind, no_action.\n\n");
    if !history.is_empty() {
        p.push_str("The user's previous answers:\n\n");
        for (i, s) in history.iter().enumerate() {
            p.push_str(&format!("Example {}:\n", i + 1));
            render_task(&mut p, &s.task);
            let when = match &s.constraint {
                Some(c) if !c.is_empty() => {
                    c.bindings.iter().map(|(v, b)| format!("{v} = {b}")).collect::<Vec<_>>().join(", ")
                }
                _ => "any".to_string(),
            };
            p.push_str(&format!("When: {when}\n"));
            p.push_str(&format!("adaptation: {}\n", s.adaptation));
            if let Some(items) = s.explanation.as_ref().filter(|e| !e.is_empty()) {
                let text: Vec<String> = items.iter().map(render_item).collect();
                p.push_str(&format!("explanation: {}\n", text.join("; ")));
            }
            p.push('\n');
        }
    }
    p.push_str("New task:\n");
    render_task(&mut p, task);
    let active = state.active(space);
    p.push_str(&format!("Current state: {}\n\n", if active.is_empty() { "none".into() } else { active.join(", ") }));
    p.push_str("Answer with exactly two lines:\n");
    p.push_str("adaptation: <do_now|do_later|remind|no_action>\n");
    p.push_str("explanation: <component>: <concept>\n");
    p
}

const LABEL_WORDS: [(&str, AdaptationLabel); 4] = [
    ("do_now", AdaptationLabel::DoNow),
    ("do_later", AdaptationLabel::DoLater),
    ("remind", AdaptationLabel::Remind),
    ("no_action", AdaptationLabel::NoAction),
];

fn field<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let line = line.trim();
        let (head, rest) = line.split_once(':')?;
        (head.trim().eq_ignore_ascii_case(name)).then(|| rest.trim())
    })
}

/// Label from an "adaptation:" line, else the earliest label word anywhere;
/// explanation from an "explanation:" line.
pub fn parse_llm_response(text: &str) -> Result<(AdaptationLabel, Option<String>), BaselineError> {
    let explanation = field(text, "explanation").map(clean_text).filter(|e| !e.is_empty());
    let strip = |s: &str| s.trim_matches(|c: char| !c.is_alphanumeric() && c != '_').to_string();
    if let Some(label) = field(text, "adaptation").and_then(|v| parse_adaptation_label(&strip(v)).ok()) {
        return Ok((label, explanation));
    }
    let lower = text.to_lowercase();
    LABEL_WORDS
        .iter()
        .filter_map(|(w, l)| lower.find(w).map(|pos| (pos, *l)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, l)| (l, explanation))
        .ok_or_else(|| BaselineError::Unparseable(text.chars().take(200).collect()))
}

/// Reads "<component>: <concept>" back into a row reference for grading.
pub fn explanation_ref(task: &TaskDescription, text: &str) -> Option<TokenRef> {
    let (component, concept) = text.split_once(':')?;
    let (t, c) = task.components().find(|(_, c)| norm_key(c) == norm_key(component))?;
    Some(TokenRef::Concept { component: c.to_string(), component_type: t, concept: clean_text(concept) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmPrediction {
    /// `None` when the response had no recognizable label.
    pub label: Option<AdaptationLabel>,
    pub explanation: Option<String>,
    pub response: String,
}

/// Few-shot prompting against any completion client (live or replayed).
pub fn llm_predict(
    client: &dyn CompletionClient,
    history: &[FeedbackSample],
    task: &TaskDescription,
    space: &StateSpace,
    state: &StateVector,
) -> Result<LlmPrediction, BaselineError> {
    let prompt = build_fewshot_prompt(history, task, space, state);
    let response = client.complete(&prompt)?;
    Ok(match parse_llm_response(&response) {
        Ok((label, explanation)) => LlmPrediction { label: Some(label), explanation, response },
        Err(_) => LlmPrediction { label: None, explanation: None, response },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StateConstraint;

    fn drill_task() -> TaskDescription {
        TaskDescription::new(
            "drill",
            "drilling holes in the wall to put up a coat hook",
            "home decoration",
            &["electric drill", "hammer", "screws"],
            &["living room"],
        )
    }

    fn drill_sample() -> FeedbackSample {
        FeedbackSample::new(drill_task(), AdaptationLabel::NoAction).with_explanation(vec![
            ExplanationItem::component(
                "drilling holes in the wall to put up a coat hook",
                ComponentType::Action,
                "can cause major damage or harm if done imprecisely",
            ),
            ExplanationItem::component("electric drill", ComponentType::Object, "can easily hurt someone without intending to"),
        ])
    }

    fn space() -> StateSpace {
        StateSpace::new(&["weekend", "guests_present"]).unwrap()
    }

    #[test]
    fn rules_from_explained_components() {
        let rules = induce_rules(&[drill_sample()]);
        assert_eq!(rules.rules.len(), 2);
        assert_eq!(rules.rules[0].component, "drilling holes in the wall to put up a coat hook");
        assert_eq!(rules.rules[1].component_type, ComponentType::Object);
        assert!(rules.rules.iter().all(|r| r.label == AdaptationLabel::NoAction));
        assert_eq!(rules.rules[1].describe(), "Object electric drill is involved");

        assert!(induce_rules(&[FeedbackSample::new(drill_task(), AdaptationLabel::DoNow)]).rules.is_empty());
        assert_eq!(induce_rules(&[drill_sample(), drill_sample()]).rules.len(), 2);
    }

    #[test]
    fn constrained_samples_add_state_rules() {
        let s = drill_sample().with_constraint(StateConstraint::new().with("weekend", true));
        let rules = induce_rules(&[s]);
        assert_eq!(rules.rules.len(), 4);
        assert_eq!(rules.rules.iter().filter(|r| r.state_condition.is_some()).count(), 2);
    }

    #[test]
    fn majority_vote_with_default_and_tie_break() {
        let rules = induce_rules(&[drill_sample()]);
        let space = space();
        let state = StateVector::all_false(&space);
        let other = TaskDescription::new("shelf", "hanging a shelf", "home decoration", &["electric drill"], &["hallway"]);
        let (label, rule) = rule_predict(&rules, &other, &space, &state);
        assert_eq!(label, AdaptationLabel::NoAction);
        assert_eq!(rule.unwrap().component, "electric drill");

        let unrelated = TaskDescription::new("w", "watering plants", "gardening", &["jug"], &["patio"]);
        assert_eq!(rule_predict(&rules, &unrelated, &space, &state), (AdaptationLabel::DoNow, None));

        let tie = RuleSet {
            rules: vec![
                Rule { label: AdaptationLabel::DoNow, ..rules.rules[1].clone() },
                Rule { component: "hanging a shelf".into(), component_type: ComponentType::Action, ..rules.rules[1].clone() },
            ],
            default_label: AdaptationLabel::DoNow,
        };
        assert_eq!(rule_predict(&tie, &other, &space, &state).0, AdaptationLabel::NoAction);
    }

    #[test]
    fn state_conditions_gate_rules() {
        let s = FeedbackSample::new(drill_task(), AdaptationLabel::Remind)
            .with_explanation(vec![ExplanationItem::component("hammer", ComponentType::Object, "is heavy")])
            .with_constraint(StateConstraint::new().with("weekend", true));
        let mut rules = induce_rules(&[s]);
        rules.rules.retain(|r| r.state_condition.is_some());
        let space = space();
        let off = StateVector::new(vec![false, false]);
        let on = StateVector::new(vec![true, false]);
        assert_eq!(rule_predict(&rules, &drill_task(), &space, &off).0, AdaptationLabel::DoNow);
        assert_eq!(rule_predict(&rules, &drill_task(), &space, &on).0, AdaptationLabel::Remind);
    }

    #[test]
    fn prompt_is_deterministic_and_complete() {
        let space = space();
        let state = StateVector::new(vec![true, false]);
        let empty = build_fewshot_prompt(&[], &drill_task(), &space, &state);
        assert!(!empty.contains("Example"));
        assert!(empty.contains("Current state: weekend"));
        let history: Vec<FeedbackSample> = (0..40)
            .map(|i| {
                let mut s = drill_sample();
                s.task.action = format!("task number {i}");
                s
            })
            .collect();
        let p = build_fewshot_prompt(&history, &drill_task(), &space, &state);
        assert_eq!(p, build_fewshot_prompt(&history, &drill_task(), &space, &state));
        assert_eq!(p.matches("Example ").count(), 40);
        assert!(p.find("task number 3\n").unwrap() < p.find("task number 4\n").unwrap());
        assert!(p.contains("imprecisely; electric drill: can easily hurt someone without intending to\n"));
    }

    #[test]
    fn response_parsing() {
        assert_eq!(
            parse_llm_response("adaptation: do_later\nexplanation: stove: involves an open flame").unwrap(),
            (AdaptationLabel::DoLater, Some("stove: involves an open flame".into()))
        );
        assert_eq!(
            parse_llm_response("I think the robot should do_now because it is easy").unwrap(),
            (AdaptationLabel::DoNow, None)
        );
        assert_eq!(parse_llm_response("Adaptation: **no_action**").unwrap().0, AdaptationLabel::NoAction);
        assert!(matches!(parse_llm_response("the robot should help"), Err(BaselineError::Unparseable(_))));
    }

    #[test]
    fn llm_explanations_map_to_rows() {
        let r = explanation_ref(&drill_task(), "Electric drill: can easily hurt someone without intending to").unwrap();
        assert!(r.hits(&ExplanationItem::component(
            "electric drill",
            ComponentType::Object,
            "can easily hurt someone without intending to"
        )));
        assert_eq!(explanation_ref(&drill_task(), "kettle: is hot"), None);
    }

    #[test]
    fn replayed_llm_baseline() {
        let space = space();
        let state = StateVector::all_false(&space);
        let client = |_: &str| -> Result<String, TransportError> { Ok("adaptation: remind\n".into()) };
        let p = llm_predict(&client, &[drill_sample()], &drill_task(), &space, &state).unwrap();
        assert_eq!(p.label, Some(AdaptationLabel::Remind));
        let vague = |_: &str| -> Result<String, TransportError> { Ok("hmm".into()) };
        assert_eq!(llm_predict(&vague, &[], &drill_task(), &space, &state).unwrap().label, None);
    }
}
