//! Cross-validated experiments: folds, feedback-size curves, baselines and
//! ablations, and the report they produce.

mod metrics;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{explanation_ref, induce_rules, llm_predict, rule_predict, BaselineError};
use crate::commonsense::{apply_oracle, build_representation, CommonsenseError, CompletionClient, ScoreCache, ScoredRepresentation, Scorer};
use crate::dataio::PersonaDataset;
use crate::domain::{FeedbackSample, StateVector};
use crate::embedding::EmbeddingProvider;
use crate::personalization::{expand_feedback, train, ModelError, TokenRef, TrainConfig, Tokenization};

pub use metrics::{
    classify_error, explanation_accuracy, prediction_accuracy, ErrorCategory, ErrorRates, Metrics, PredictionRecord,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction records")]
    EmptyRecords,
    #[error("{samples} samples cannot be split into {k} folds")]
    TooFewSamples { samples: usize, k: usize },
    #[error("the llm condition needs a completion client")]
    MissingLlmClient,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Commonsense(#[from] CommonsenseError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Seeded shuffle dealt round-robin into `k` folds of indices into `samples`.
pub fn kfold_split<T>(samples: &[T], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k == 0 || samples.len() < k {
        return Err(EvalError::TooFewSamples { samples: samples.len(), k });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    Ok(folds)
}

/// A system under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Taaco,
    /// Scores of user-explained pairs forced to the maximum, train and test.
    Oracle,
    Rules,
    Llm,
    /// Component texts instead of concept rows.
    NoConcepts,
    /// No explanation loss.
    NoConceptTraining,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Taaco,
        Condition::Oracle,
        Condition::Rules,
        Condition::Llm,
        Condition::NoConcepts,
        Condition::NoConceptTraining,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Taaco => "taaco",
            Condition::Oracle => "oracle",
            Condition::Rules => "rules",
            Condition::Llm => "llm",
            Condition::NoConcepts => "no_concepts",
            Condition::NoConceptTraining => "no_concept_training",
        }
    }

    fn train_config(self, base: &TrainConfig, seed: u64) -> Option<TrainConfig> {
        let mut cfg = base.with_seed(seed);
        match self {
            Condition::Taaco | Condition::Oracle => {}
            Condition::NoConcepts => cfg.tokenization = Tokenization::Components,
            Condition::NoConceptTraining => cfg.lambda = 0.0,
            Condition::Rules | Condition::Llm => return None,
        }
        Some(cfg)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown condition '{s}'"))
    }
}

/// Which ablation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoConcepts,
    NoConceptTraining,
}

impl From<Ablation> for Condition {
    fn from(a: Ablation) -> Self {
        match a {
            Ablation::NoConcepts => Condition::NoConcepts,
            Ablation::NoConceptTraining => Condition::NoConceptTraining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Training-set sizes, in tasks (each with all of its feedback).
    pub sizes: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    /// Concrete states drawn per held-out sample.
    pub eval_states: usize,
    pub train: TrainConfig,
    /// Worker threads for independent cells; 0 uses every available core.
    /// Results do not depend on it.
    #[serde(default)]
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { sizes: vec![10, 20, 30, 40], folds: 5, seed: 0, eval_states: 4, train: TrainConfig::default(), threads: 0 }
    }
}

/// External services an evaluation reads from.
#[derive(Clone, Copy)]
pub struct EvalResources<'a> {
    pub scorer: &'a Scorer,
    pub cache: &'a ScoreCache,
    pub embedder: &'a dyn EmbeddingProvider,
    pub llm: Option<&'a dyn CompletionClient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub condition: Condition,
    pub size: usize,
    pub fold: usize,
    pub seed: u64,
    /// May be below `size` when the fold has fewer training tasks.
    pub train_tasks: usize,
    pub metrics: Metrics,
}

/// Metrics pooled over every fold of one (condition, size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: Condition,
    pub size: usize,
    pub seeds: Vec<u64>,
    pub train_tasks: Vec<usize>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub persona_id: String,
    pub scorer_id: String,
    pub rows: Vec<ReportRow>,
    pub folds: Vec<FoldResult>,
}

impl EvaluationReport {
    pub fn row(&self, condition: Condition, size: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition && r.size == size)
    }

    /// Appends another report's rows; both must describe the same persona.
    pub fn merge(&mut self, other: EvaluationReport) {
        debug_assert_eq!(self.persona_id, other.persona_id);
        self.rows.extend(other.rows);
        self.folds.extend(other.folds);
    }

    /// Tab-separated aggregate rows for plotting.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "persona\tscorer\tcondition\tsize\trecords\tprediction_accuracy\texplanation_accuracy\texplanation_eligible",
        );
        for c in ErrorCategory::ALL {
            out.push('\t');
            out.push_str(c.as_str());
        }
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let expl = m.explanation_accuracy.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}",
                self.persona_id, self.scorer_id, r.condition, r.size, m.records, m.prediction_accuracy, expl,
                m.explanation_eligible
            ));
            for c in ErrorCategory::ALL {
                out.push_str(&format!("\t{:.6}", m.error_rates.get(c)));
            }
            out.push('\n');
        }
        out
    }
}

/// Held-out (sample, state) pairs of one fold.
struct EvalPoint {
    sample: usize,
    state: StateVector,
}

/// Training seed of one (fold, size) cell; shared by all conditions so they
/// see the same subsets and initializations.
fn cell_seed(seed: u64, fold: usize, size: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64 * 10_007).wrapping_add(size as u64)
}

/// Runs every condition at every size over the same folds, subsets and
/// evaluation states.
pub fn run_conditions(
    persona: &PersonaDataset,
    conditions: &[Condition],
    res: &EvalResources<'_>,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    let samples = persona.samples();
    let space = &persona.state_space;
    let vocab = &persona.vocabulary;
    let reps: Vec<ScoredRepresentation> = samples
        .iter()
        .map(|s| build_representation(&s.task, vocab, res.scorer, res.cache))
        .collect::<Result<_, _>>()?;
    let oracle_reps: Vec<ScoredRepresentation> = samples
        .iter()
        .zip(&reps)
        .map(|(s, rep)| match &s.explanation {
            Some(items) => apply_oracle(rep, items, vocab),
            None => Ok(rep.clone()),
        })
        .collect::<Result<_, _>>()?;

    // tasks are the unit of folding and of training-set size; every feedback
    // sample of a task goes wherever the task goes
    let mut task_samples: Vec<Vec<usize>> = Vec::with_capacity(persona.tasks.len());
    let mut next = 0;
    for t in &persona.tasks {
        task_samples.push((next..next + t.feedback.len()).collect());
        next += t.feedback.len();
    }
    let folds = kfold_split(&persona.tasks, config.folds, config.seed)?;
    let mut fold_points = Vec::with_capacity(folds.len());
    let mut jobs = Vec::new();
    for (fi, test_tasks) in folds.iter().enumerate() {
        let mut pool: Vec<usize> = (0..persona.tasks.len()).filter(|i| !test_tasks.contains(i)).collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cell_seed(config.seed, fi, 0)));

        let mut eval_rng = ChaCha8Rng::seed_from_u64(cell_seed(config.seed, fi, 0));
        eval_rng.set_stream(2);
        let mut points = Vec::new();
        for &si in test_tasks.iter().flat_map(|&t| &task_samples[t]) {
            for p in expand_feedback(&samples[si], space, &reps[si], config.eval_states, &mut eval_rng)? {
                points.push(EvalPoint { sample: si, state: p.state });
            }
        }
        fold_points.push(points);

        for &size in &config.sizes {
            // prefixes of one shuffle, so smaller subsets nest in larger ones
            let train_tasks = size.min(pool.len());
            let train_idx: Vec<usize> = pool[..train_tasks].iter().flat_map(|&t| task_samples[t].iter().copied()).collect();
            for &condition in conditions {
                jobs.push(CellJob { condition, size, fold: fi, seed: cell_seed(config.seed, fi, size), train_tasks, train_idx: train_idx.clone() });
            }
        }
    }

    let run = |job: &CellJob| -> Result<Cell, EvalError> {
        let reps = if job.condition == Condition::Oracle { &oracle_reps } else { &reps };
        let records = evaluate_cell(
            job.condition,
            &samples,
            reps,
            &job.train_idx,
            &fold_points[job.fold],
            job.seed,
            persona,
            res,
            config,
        )?;
        let metrics = Metrics::from_records(&records)?;
        log::info!(
            "{} {} size={} fold={}: accuracy {:.3}",
            persona.persona_id,
            job.condition,
            job.size,
            job.fold,
            metrics.prediction_accuracy
        );
        let result = FoldResult {
            condition: job.condition,
            size: job.size,
            fold: job.fold,
            seed: job.seed,
            train_tasks: job.train_tasks,
            metrics,
        };
        Ok((result, records))
    };
    type Cell = (FoldResult, Vec<PredictionRecord>);
    let mut cells: BTreeMap<(Condition, usize), Vec<Cell>> = BTreeMap::new();
    for (job, out) in jobs.iter().zip(run_parallel(&jobs, config.threads, run)) {
        cells.entry((job.condition, job.size)).or_default().push(out?);
    }

    let mut rows = Vec::new();
    let mut fold_results = Vec::new();
    for &condition in conditions {
        for &size in &config.sizes {
            let cell = cells.remove(&(condition, size)).unwrap_or_default();
            let pooled: Vec<PredictionRecord> = cell.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
            rows.push(ReportRow {
                condition,
                size,
                seeds: cell.iter().map(|(f, _)| f.seed).collect(),
                train_tasks: cell.iter().map(|(f, _)| f.train_tasks).collect(),
                metrics: Metrics::from_records(&pooled)?,
            });
            fold_results.extend(cell.into_iter().map(|(f, _)| f));
        }
    }
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        persona_id: persona.persona_id.clone(),
        scorer_id: res.scorer.id().to_string(),
        rows,
        folds: fold_results,
    })
}

struct CellJob {
    condition: Condition,
    size: usize,
    fold: usize,
    seed: u64,
    train_tasks: usize,
    train_idx: Vec<usize>,
}

/// Applies `f` to every job on up to `threads` workers (0 = all cores) and
/// returns the results in job order.
fn run_parallel<J: Sync, T: Send>(jobs: &[J], threads: usize, f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    let workers = match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let out = f(job);
                *slots[i].lock().expect("no worker panics while holding a slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    condition: Condition,
    samples: &[FeedbackSample],
    reps: &[ScoredRepresentation],
    train_idx: &[usize],
    points: &[EvalPoint],
    seed: u64,
    persona: &PersonaDataset,
    res: &EvalResources<'_>,
    config: &EvalConfig,
) -> Result<Vec<PredictionRecord>, EvalError> {
    let space = &persona.state_space;
    let train_samples: Vec<FeedbackSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let record = |p: &EvalPoint, predicted, predicted_explanation| {
        let s = &samples[p.sample];
        PredictionRecord {
            task_id: s.task.id.clone(),
            state: p.state.clone(),
            predicted,
            truth: s.adaptation,
            predicted_explanation,
            ground_truth: s.has_explanation().then(|| s.ground_truth_set()),
        }
    };
    match condition {
        Condition::Rules => {
            let rules = induce_rules(&train_samples);
            Ok(points
                .iter()
                .map(|p| {
                    let (label, rule) = rule_predict(&rules, &samples[p.sample].task, space, &p.state);
                    let cited = rule.map(|r| TokenRef::Component {
                        component: r.component.clone(),
                        component_type: r.component_type,
                    });
                    record(p, Some(label), cited)
                })
                .collect())
        }
        Condition::Llm => {
            let client = res.llm.ok_or(EvalError::MissingLlmClient)?;
            points
                .iter()
                .map(|p| {
                    let task = &samples[p.sample].task;
                    let out = llm_predict(client, &train_samples, task, space, &p.state)?;
                    let cited = out.explanation.as_deref().and_then(|e| explanation_ref(task, e));
                    Ok(record(p, out.label, cited))
                })
                .collect()
        }
        _ => {
            let cfg = condition.train_config(&config.train, seed).expect("learned condition");
            let data: Vec<(FeedbackSample, ScoredRepresentation)> =
                train_idx.iter().map(|&i| (samples[i].clone(), reps[i].clone())).collect();
            let trained = train(&data, space, &persona.vocabulary, res.embedder, &cfg)?.model;
            let tasks: Vec<_> = points.iter().map(|p| &samples[p.sample].task).collect();
            let bank = trained.bank(res.embedder, &tasks)?;
            let projected = trained.model.project_bank(&bank)?;
            points
                .iter()
                .map(|p| {
                    let s = &samples[p.sample];
                    let plan = trained.plan(&s.task, &reps[p.sample], &p.state, &bank)?;
                    let pred = trained.predict_plan(&plan, &projected)?;
                    Ok(record(p, Some(pred.label), Some(pred.explanation)))
                })
                .collect()
        }
    }
}

pub fn run_feedback_curve(
    persona: &PersonaDataset,
    condition: Condition,
    res: &EvalResources<'_>,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    run_conditions(persona, &[condition], res, config)
}

pub fn run_ablation(
    persona: &PersonaDataset,
    which: Ablation,
    res: &EvalResources<'_>,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    run_conditions(persona, &[which.into()], res, config)
}

#[cfg(test)]
mod tests;
