use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::domain::{AdaptationLabel, ExplanationItem, StateVector};
use crate::personalization::TokenRef;

/// One evaluated (task, state) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub task_id: String,
    pub state: StateVector,
    /// `None` when the system gave no usable answer; always incorrect.
    pub predicted: Option<AdaptationLabel>,
    pub truth: AdaptationLabel,
    pub predicted_explanation: Option<TokenRef>,
    /// Explained components plus constrained state variables; only present
    /// when the user explained the sample.
    pub ground_truth: Option<Vec<ExplanationItem>>,
}

impl PredictionRecord {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.truth)
    }

    /// A missing answer leaves the task undone, so it counts as skipped.
    pub fn error_category(&self) -> Option<ErrorCategory> {
        match self.predicted {
            Some(p) => classify_error(p, self.truth),
            None => Some(ErrorCategory::SkippedTask),
        }
    }
}

/// What a misprediction costs the user in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Acted when the user wanted no action or only a reminder.
    PerformedProhibited,
    /// Did nothing when something was wanted.
    SkippedTask,
    /// Did now what should wait, or the reverse.
    UnnecessaryDelayOrDisturbance,
    /// Asked the user when it should not have.
    UnnecessaryInteraction,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::PerformedProhibited,
        ErrorCategory::SkippedTask,
        ErrorCategory::UnnecessaryDelayOrDisturbance,
        ErrorCategory::UnnecessaryInteraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::PerformedProhibited => "performed_prohibited",
            ErrorCategory::SkippedTask => "skipped_task",
            ErrorCategory::UnnecessaryDelayOrDisturbance => "unnecessary_delay_or_disturbance",
            ErrorCategory::UnnecessaryInteraction => "unnecessary_interaction",
        }
    }
}

pub fn classify_error(predicted: AdaptationLabel, truth: AdaptationLabel) -> Option<ErrorCategory> {
    use AdaptationLabel::*;
    if predicted == truth {
        return None;
    }
    Some(match (predicted, truth) {
        (DoNow | DoLater, NoAction | Remind) => ErrorCategory::PerformedProhibited,
        (DoNow | DoLater, _) => ErrorCategory::UnnecessaryDelayOrDisturbance,
        (NoAction, _) => ErrorCategory::SkippedTask,
        (Remind, _) => ErrorCategory::UnnecessaryInteraction,
    })
}

pub fn prediction_accuracy(records: &[PredictionRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    Ok(records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}

/// Share of correctly predicted, user-explained records whose top
/// explanation is in the ground-truth set, with the number of such records.
pub fn explanation_accuracy(records: &[PredictionRecord]) -> (Option<f64>, usize) {
    let mut eligible_count = 0;
    let mut hits = 0;
    for r in records.iter().filter(|r| r.correct()) {
        let Some(gt) = r.ground_truth.as_ref().filter(|g| !g.is_empty()) else { continue };
        eligible_count += 1;
        if r.predicted_explanation.as_ref().is_some_and(|e| e.hits_any(gt)) {
            hits += 1;
        }
    }
    ((eligible_count > 0).then(|| hits as f64 / eligible_count as f64), eligible_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorRates {
    pub performed_prohibited: f64,
    pub skipped_task: f64,
    pub unnecessary_delay_or_disturbance: f64,
    pub unnecessary_interaction: f64,
}

impl ErrorRates {
    pub fn get(&self, c: ErrorCategory) -> f64 {
        match c {
            ErrorCategory::PerformedProhibited => self.performed_prohibited,
            ErrorCategory::SkippedTask => self.skipped_task,
            ErrorCategory::UnnecessaryDelayOrDisturbance => self.unnecessary_delay_or_disturbance,
            ErrorCategory::UnnecessaryInteraction => self.unnecessary_interaction,
        }
    }

    fn get_mut(&mut self, c: ErrorCategory) -> &mut f64 {
        match c {
            ErrorCategory::PerformedProhibited => &mut self.performed_prohibited,
            ErrorCategory::SkippedTask => &mut self.skipped_task,
            ErrorCategory::UnnecessaryDelayOrDisturbance => &mut self.unnecessary_delay_or_disturbance,
            ErrorCategory::UnnecessaryInteraction => &mut self.unnecessary_interaction,
        }
    }

    pub fn total(&self) -> f64 {
        ErrorCategory::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Everything reported for a set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub records: usize,
    pub prediction_accuracy: f64,
    pub explanation_accuracy: Option<f64>,
    pub explanation_eligible: usize,
    pub error_rates: ErrorRates,
}

impl Metrics {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self, EvalError> {
        let n = records.len();
        let correct = records.iter().filter(|r| r.correct()).count();
        if n == 0 {
            return Err(EvalError::EmptyRecords);
        }
        let mut counts = [0usize; 4];
        for r in records {
            if let Some(c) = r.error_category() {
                counts[ErrorCategory::ALL.iter().position(|&x| x == c).expect("listed")] += 1;
            }
        }
        let mut error_rates = ErrorRates::default();
        for (c, k) in ErrorCategory::ALL.iter().zip(counts) {
            *error_rates.get_mut(*c) = k as f64 / n as f64;
        }
        let (explanation_accuracy, explanation_eligible) = explanation_accuracy(records);
        Ok(Self {
            records: n,
            prediction_accuracy: correct as f64 / n as f64,
            explanation_accuracy,
            explanation_eligible,
            error_rates,
        })
    }
}
