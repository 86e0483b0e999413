use proptest::prelude::*;

use super::*;
use crate::commonsense::ScoreCache;
use crate::dataio::{generate_synthetic_persona, SyntheticShape, SyntheticSpec, ORACLE_SCORER};
use crate::domain::{AdaptationLabel, ComponentType, ExplanationItem};
use crate::embedding::FallbackEmbedder;
use crate::neuralnet::AdamConfig;
use crate::personalization::ModelConfig;

use AdaptationLabel::*;

fn rec(predicted: AdaptationLabel, truth: AdaptationLabel) -> PredictionRecord {
    PredictionRecord {
        task_id: "t".into(),
        state: StateVector::new(vec![]),
        predicted: Some(predicted),
        truth,
        predicted_explanation: None,
        ground_truth: None,
    }
}

#[test]
fn taxonomy_examples() {
    assert_eq!(classify_error(DoNow, NoAction), Some(ErrorCategory::PerformedProhibited));
    assert_eq!(classify_error(NoAction, DoNow), Some(ErrorCategory::SkippedTask));
    assert_eq!(classify_error(DoLater, DoNow), Some(ErrorCategory::UnnecessaryDelayOrDisturbance));
    assert_eq!(classify_error(Remind, DoNow), Some(ErrorCategory::UnnecessaryInteraction));
}

#[test]
fn taxonomy_partitions_mispredictions() {
    let mut none = 0;
    let mut some = 0;
    for p in AdaptationLabel::ALL {
        for t in AdaptationLabel::ALL {
            match classify_error(p, t) {
                None => {
                    assert_eq!(p, t);
                    none += 1
                }
                Some(_) => some += 1,
            }
        }
    }
    assert_eq!((none, some), (4, 12));
}

#[test]
fn accuracy_counts() {
    let rs = vec![rec(DoNow, DoNow), rec(Remind, Remind), rec(NoAction, NoAction), rec(DoNow, Remind)];
    assert_eq!(prediction_accuracy(&rs).unwrap(), 0.75);
    assert_eq!(prediction_accuracy(&rs[..3]).unwrap(), 1.0);
    assert!(matches!(prediction_accuracy(&[]), Err(EvalError::EmptyRecords)));
}

#[test]
fn explanation_accuracy_filters_eligible_records() {
    let gt = vec![ExplanationItem::component("stove", ComponentType::Object, "involves an open flame")];
    let hit = TokenRef::Concept {
        component: "stove".into(),
        component_type: ComponentType::Object,
        concept: "involves an open flame".into(),
    };
    let miss = TokenRef::State { state_variable: "weekend".into() };
    let with = |p, t, e: &TokenRef| PredictionRecord {
        predicted_explanation: Some(e.clone()),
        ground_truth: Some(gt.clone()),
        ..rec(p, t)
    };
    let rs = vec![with(DoNow, DoNow, &hit), with(Remind, Remind, &miss), with(DoNow, Remind, &hit), rec(DoNow, DoNow)];
    assert_eq!(explanation_accuracy(&rs), (Some(0.5), 2));
    assert_eq!(explanation_accuracy(&rs[2..]), (None, 0));
}

#[test]
fn missing_answers_are_skipped_tasks() {
    let r = PredictionRecord { predicted: None, ..rec(DoNow, NoAction) };
    assert!(!r.correct());
    assert_eq!(r.error_category(), Some(ErrorCategory::SkippedTask));
}

#[test]
fn kfold_examples() {
    let xs: Vec<u32> = (0..10).collect();
    let folds = kfold_split(&xs, 5, 3).unwrap();
    assert!(folds.iter().all(|f| f.len() == 2));
    let mut all: Vec<usize> = folds.concat();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(folds, kfold_split(&xs, 5, 3).unwrap());
    assert!(matches!(kfold_split(&xs[..3], 5, 0), Err(EvalError::TooFewSamples { samples: 3, k: 5 })));
}

proptest! {
    #[test]
    fn folds_partition(n in 5usize..60, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let xs = vec![(); n];
        let folds = kfold_split(&xs, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = folds.concat();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn error_rates_sum_to_error(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
        let rs: Vec<PredictionRecord> = pairs
            .iter()
            .map(|&(p, t)| rec(AdaptationLabel::from_index(p).unwrap(), AdaptationLabel::from_index(t).unwrap()))
            .collect();
        let m = Metrics::from_records(&rs).unwrap();
        prop_assert!((m.error_rates.total() - (1.0 - m.prediction_accuracy)).abs() < 1e-9);
    }
}

fn small_persona() -> crate::dataio::SyntheticPersona {
    let shape = SyntheticShape { tasks: 20, ..SyntheticShape::default() };
    generate_synthetic_persona(&SyntheticSpec::sample(11, &shape))
}

fn tiny_config() -> EvalConfig {
    EvalConfig {
        sizes: vec![5, 10],
        folds: 3,
        seed: 4,
        eval_states: 2,
        train: TrainConfig {
            epochs: 5,
            adam: AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
            n_aug: 1,
            model: ModelConfig { embed_dim: 4, layers: 1, heads: 2, ffn_dim: 8, seed: 0 },
            ..TrainConfig::default()
        },
        threads: 1,
    }
}

#[test]
fn curve_report_shape_and_determinism() {
    let p = small_persona();
    let cache = ScoreCache::from_entries(p.oracle_cache.clone());
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 16);
    let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let cfg = tiny_config();
    let conditions = [Condition::Taaco, Condition::Rules, Condition::NoConcepts];
    let report = run_conditions(&p.dataset, &conditions, &res, &cfg).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.folds.len(), 18);
    for row in &report.rows {
        let m = &row.metrics;
        assert!((m.error_rates.total() - (1.0 - m.prediction_accuracy)).abs() < 1e-9);
        assert_eq!(row.seeds.len(), 3);
        assert!(row.train_tasks.iter().all(|&n| n <= row.size));
    }
    // paired conditions see identical evaluation points
    let records = |c| report.row(c, 10).unwrap().metrics.records;
    assert_eq!(records(Condition::Taaco), records(Condition::Rules));
    assert_eq!(records(Condition::Taaco), p.dataset.sample_count() * cfg.eval_states);

    let again = run_conditions(&p.dataset, &conditions, &res, &cfg).unwrap();
    assert_eq!(crate::dataio::report_to_string(&report), crate::dataio::report_to_string(&again));
    assert!(report.to_table().lines().count() == 7);
    assert_eq!(scorer.client_calls(), 0);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let p = small_persona();
    let cache = ScoreCache::from_entries(p.oracle_cache.clone());
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 16);
    let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let conditions = [Condition::Taaco, Condition::Oracle, Condition::Rules];
    let one = run_conditions(&p.dataset, &conditions, &res, &tiny_config()).unwrap();
    let four = run_conditions(&p.dataset, &conditions, &res, &EvalConfig { threads: 4, ..tiny_config() }).unwrap();
    assert_eq!(crate::dataio::report_to_string(&one), crate::dataio::report_to_string(&four));
}

#[test]
fn llm_condition_needs_a_client() {
    let p = small_persona();
    let cache = ScoreCache::from_entries(p.oracle_cache.clone());
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 16);
    let mut res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let cfg = EvalConfig { sizes: vec![5], ..tiny_config() };
    assert!(matches!(run_feedback_curve(&p.dataset, Condition::Llm, &res, &cfg), Err(EvalError::MissingLlmClient)));

    let client = |_: &str| -> Result<String, crate::commonsense::TransportError> { Ok("adaptation: do_now".into()) };
    res.llm = Some(&client);
    let report = run_feedback_curve(&p.dataset, Condition::Llm, &res, &cfg).unwrap();
    let m = &report.rows[0].metrics;
    assert!((m.error_rates.performed_prohibited + m.error_rates.unnecessary_delay_or_disturbance
        - (1.0 - m.prediction_accuracy))
        .abs()
        < 1e-9);
}

#[test]
fn conditions_parse() {
    for c in Condition::ALL {
        assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
    }
    assert_eq!("no-concepts".parse::<Condition>().unwrap(), Condition::NoConcepts);
    assert!("gpt".parse::<Condition>().is_err());
}
