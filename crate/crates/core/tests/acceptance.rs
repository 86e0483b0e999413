//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any gating criterion fails.
//!
//! Criteria 2–5 train a few hundred compact models and take a while; set
//! `TAACO_ACCEPTANCE_QUICK=1` to run only the fast criteria (1, 6, 7, 8).
//! Criterion 9 runs when `TAACO_PUBLIC_PERSONA` and `TAACO_PUBLIC_CACHE`
//! point at a persona file and its score cache; it never gates.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taaco::commonsense::{
    build_representation, warm_cache, ConceptLists, ConceptVocabulary, Provenance, ScoreCache, Scorer, ScoringMode,
    TransportError,
};
use taaco::dataio::{
    generate_synthetic_persona, load_persona, noisy_cache_entries, report_to_string, SyntheticPersona,
    SyntheticShape, SyntheticSpec, NOISY_SCORER, ORACLE_SCORER,
};
use taaco::domain::{
    AdaptationLabel, ComponentType, ExplanationItem, FeedbackSample, StateConstraint, StateSpace, StateVector,
    TaskDescription,
};
use taaco::embedding::FallbackEmbedder;
use taaco::evaluation::{
    classify_error, run_conditions, Condition, EvalConfig, EvalResources, EvaluationReport,
};
use taaco::neuralnet::finite_difference_check;
use taaco::personalization::{
    argmax, decode_checkpoint, encode_checkpoint, expand_feedback, explanation_probabilities, train, EmbeddingBank,
    ModelConfig, TaacoModel, Tokenization, TrainConfig,
};

const PERSONA_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const NOISE: f64 = 0.15;

struct Outcome {
    results: Vec<(String, bool)>,
}

impl Outcome {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass));
    }
}

fn hashed_score(prompt: &str) -> Result<String, TransportError> {
    let h = prompt.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    Ok((1 + h % 10).to_string())
}

// --- criterion 1 -----------------------------------------------------------

// With λ = 20 the loss is O(10), so at h = 1e-5 cancellation noise alone
// reaches ~1e-4 relative error on gradients near the 1e-6 floor.
const GRADCHECK_STEP: f64 = 1e-4;

fn tiny_instance_error(seed: u64) -> (f64, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = ConceptVocabulary::base();
    let pick = |t: ComponentType, n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
        let all = base.concepts(t);
        (0..n).map(|_| all[rng.gen_range(0..all.len())].text.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect()
    };
    let lists = ConceptLists {
        action: pick(ComponentType::Action, 2, &mut rng),
        activity: pick(ComponentType::Activity, 1, &mut rng),
        object: pick(ComponentType::Object, 1, &mut rng),
        location: pick(ComponentType::Location, 1, &mut rng),
    };
    let vocab = ConceptVocabulary::from_lists(&lists, Provenance::Base);
    let names = ["weekend", "morning", "guests_present"];
    let space = StateSpace::new(&names[..rng.gen_range(1..=3)]).unwrap();
    let task = TaskDescription::new("tiny", format!("action {seed}"), format!("activity {seed}"), &["thing"], &["room"]);
    let scorer = Scorer::live("hash", Arc::new(hashed_score), ScoringMode::Strict);
    let rep = build_representation(&task, &vocab, &scorer, &ScoreCache::in_memory()).unwrap();

    let label = AdaptationLabel::from_index(rng.gen_range(0..4)).unwrap();
    let var = space.variables()[0].clone();
    let sample = FeedbackSample::new(task, label)
        .with_constraint(StateConstraint::new().with(&var, rng.gen()))
        .with_explanation(vec![
            ExplanationItem::component("thing", ComponentType::Object, &lists.object[0]),
            ExplanationItem::state(&var),
        ]);
    let dim = 3 + (seed as usize % 4);
    let embedder = FallbackEmbedder::new(seed, dim);
    let bank = EmbeddingBank::for_model(&embedder, &vocab, Tokenization::Concepts, &[]).unwrap();
    let points: Vec<_> = expand_feedback(&sample, &space, &rep, 2, &mut rng)
        .unwrap()
        .iter()
        .map(|p| p.prepare(&space, &vocab, &bank, Tokenization::Concepts).unwrap())
        .collect();
    let tokens = points[0].plan.len() + 1;
    let config = ModelConfig { embed_dim: 4, layers: 2, heads: 2, ffn_dim: 6, seed };
    let mut model = TaacoModel::new(config, space.len(), dim).unwrap();
    let mut check = |h: f64| {
        finite_difference_check(&mut model, |m| m.loss_and_gradients(&points, &bank, 20.0).unwrap().total, 120, h, seed)
            .unwrap()
    };
    (check(GRADCHECK_STEP), check(1e-5), tokens)
}

fn criterion_1(out: &mut Outcome) {
    let t = Instant::now();
    let runs: Vec<(f64, f64, usize)> = (0..5).map(tiny_instance_error).collect();
    let worst = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_small_step = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_tokens = runs.iter().map(|r| r.2).max().unwrap();
    let elapsed = t.elapsed();
    out.record(
        "1 gradient check",
        worst < 1e-4 && max_tokens <= 10 && elapsed < Duration::from_secs(30),
        format!(
            "max rel error {worst:.2e} at h = {GRADCHECK_STEP:e} over 5 instances (<= {max_tokens} tokens) in {elapsed:.1?}; \
             {worst_small_step:.2e} at h = 1e-5"
        ),
    );
}

// --- criteria 6 and 8 --------------------------------------------------------

fn criterion_6(out: &mut Outcome) {
    let t = Instant::now();
    let (mut none, mut one) = (0, 0);
    for p in AdaptationLabel::ALL {
        for q in AdaptationLabel::ALL {
            match classify_error(p, q) {
                None if p == q => none += 1,
                Some(_) if p != q => one += 1,
                _ => {}
            }
        }
    }
    out.record(
        "6 error taxonomy partition",
        none == 4 && one == 12,
        format!("{none} pairs uncategorized, {one} in exactly one category, {:.1?}", t.elapsed()),
    );
}

fn criterion_8(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        if argmax(&explanation_probabilities(&w)) == argmax(&w) {
            agree += 1;
        }
    }
    out.record("8 explanation argmax invariance", agree == 1000, format!("{agree}/1000 vectors agree"));
}

// --- criterion 7 -------------------------------------------------------------

fn criterion_7(out: &mut Outcome) {
    let shape = SyntheticShape { tasks: 20, ..SyntheticShape::default() };
    let p = generate_synthetic_persona(&SyntheticSpec::sample(21, &shape));
    let cache = ScoreCache::from_entries(p.oracle_cache.clone());
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 32);
    let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let train_cfg = TrainConfig { epochs: 20, ..TrainConfig::compact() };
    let cfg = EvalConfig { sizes: vec![5, 10], folds: 3, seed: 7, eval_states: 2, train: train_cfg, threads: 0 };
    let conds = [Condition::Taaco, Condition::Oracle, Condition::Rules];
    let a = report_to_string(&run_conditions(&p.dataset, &conds, &res, &cfg).unwrap());
    let b = report_to_string(&run_conditions(&p.dataset, &conds, &res, &cfg).unwrap());
    let reports_equal = a == b;

    let data: Vec<_> = p
        .dataset
        .samples()
        .into_iter()
        .take(15)
        .map(|s| {
            let rep = build_representation(&s.task, &p.dataset.vocabulary, &scorer, &cache).unwrap();
            (s, rep)
        })
        .collect();
    let trained = train(&data, &p.dataset.state_space, &p.dataset.vocabulary, &embedder, &train_cfg).unwrap().model;
    let reloaded = decode_checkpoint(&encode_checkpoint(&trained)).unwrap();
    let mut bitwise = true;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pt in &p.dataset.tasks {
        let state = StateVector::new((0..p.dataset.state_space.len()).map(|_| rng.gen()).collect());
        let x = trained.predict(&pt.task, &state, &p.dataset.vocabulary, &scorer, &cache, &embedder).unwrap();
        let y = reloaded.predict(&pt.task, &state, &p.dataset.vocabulary, &scorer, &cache, &embedder).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        bitwise &= x.label == y.label
            && x.explanation == y.explanation
            && bits(&x.probabilities) == bits(&y.probabilities)
            && bits(&x.attention) == bits(&y.attention);
    }

    // a counting client fills an empty cache once; the second pass is free
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let client = move |prompt: &str| {
        counter.fetch_add(1, Ordering::Relaxed);
        hashed_score(prompt)
    };
    let live = Scorer::live("counting", Arc::new(client), ScoringMode::Strict);
    let fresh = ScoreCache::in_memory();
    let tasks = p.dataset.task_descriptions();
    warm_cache(&tasks, &p.dataset.vocabulary, &live, &fresh, 4).unwrap();
    let cold = calls.load(Ordering::Relaxed);
    for t in &tasks {
        build_representation(t, &p.dataset.vocabulary, &live, &fresh).unwrap();
    }
    warm_cache(&tasks, &p.dataset.vocabulary, &live, &fresh, 4).unwrap();
    let warm = calls.load(Ordering::Relaxed) - cold;
    let eval_calls = scorer.client_calls();

    out.record(
        "7 determinism and persistence",
        reports_equal && bitwise && warm == 0 && eval_calls == 0 && cold > 0,
        format!(
            "reports identical: {reports_equal}; checkpoint predictions bitwise identical: {bitwise}; \
             client calls cold {cold}, warm {warm}, replayed evaluation {eval_calls}"
        ),
    );
}

// --- criteria 2–5 ------------------------------------------------------------

struct PersonaRuns {
    seed: u64,
    oracle: EvaluationReport,
    noisy: EvaluationReport,
}

fn resources_for(p: &SyntheticPersona, seed: u64) -> ScoreCache {
    let mut entries = p.oracle_cache.clone();
    entries.extend(noisy_cache_entries(&p.spec, NOISE, seed));
    ScoreCache::from_entries(entries)
}

fn eval_config(sizes: Vec<usize>) -> EvalConfig {
    EvalConfig { sizes, folds: 5, seed: 0, eval_states: 4, train: TrainConfig::compact(), threads: 0 }
}

fn acc(r: &EvaluationReport, c: Condition, size: usize) -> f64 {
    r.row(c, size).expect("row was evaluated").metrics.prediction_accuracy
}

fn expl(r: &EvaluationReport, c: Condition, size: usize) -> f64 {
    r.row(c, size).expect("row was evaluated").metrics.explanation_accuracy.unwrap_or(0.0)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn synthetic_criteria(out: &mut Outcome) {
    let embedder = FallbackEmbedder::new(0, 64);
    let personas: Vec<(u64, SyntheticPersona)> = PERSONA_SEEDS
        .iter()
        .map(|&s| (s, generate_synthetic_persona(&SyntheticSpec::sample(s, &SyntheticShape::default()))))
        .collect();
    for (s, p) in &personas {
        println!(
            "persona {s}: {} tasks, {} samples, {} state variables, {} concepts, {} rules",
            p.dataset.tasks.len(),
            p.dataset.sample_count(),
            p.dataset.state_space.len(),
            p.dataset.vocabulary.len(),
            p.spec.rules.len()
        );
    }

    // criterion 2: oracle and noisy scores at 40 training tasks
    let t = Instant::now();
    let mut runs: Vec<PersonaRuns> = Vec::new();
    for (seed, p) in &personas {
        let cache = resources_for(p, *seed);
        let run = |id: &str| {
            let scorer = Scorer::replay(id);
            let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
            run_conditions(&p.dataset, &[Condition::Taaco], &res, &eval_config(vec![40])).unwrap()
        };
        runs.push(PersonaRuns { seed: *seed, oracle: run(ORACLE_SCORER), noisy: run(NOISY_SCORER) });
    }
    let elapsed = t.elapsed();
    let oracle: Vec<f64> = runs.iter().map(|r| acc(&r.oracle, Condition::Taaco, 40)).collect();
    let noisy: Vec<f64> = runs.iter().map(|r| acc(&r.noisy, Condition::Taaco, 40)).collect();
    let ordered = oracle.iter().zip(&noisy).all(|(o, n)| o >= n);
    let (mo, mn) = (mean(oracle.clone()), mean(noisy.clone()));
    out.record(
        "2 synthetic oracle reproduction",
        mo >= 0.85 && mn >= 0.60 && ordered && elapsed < Duration::from_secs(600),
        format!(
            "oracle mean {mo:.3} (>= 0.85) [{}]; noisy mean {mn:.3} (>= 0.60) [{}]; oracle >= noisy on every persona: {ordered}; {elapsed:.0?}",
            fmt(&oracle),
            fmt(&noisy)
        ),
    );

    // criteria 3 and 4: noisy-score curves against the rule baseline
    let sizes = [10, 20, 30, 40];
    for (run, (_, p)) in runs.iter_mut().zip(&personas) {
        let cache = resources_for(p, run.seed);
        let scorer = Scorer::replay(NOISY_SCORER);
        let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
        let smaller = run_conditions(&p.dataset, &[Condition::Taaco], &res, &eval_config(vec![10, 20, 30])).unwrap();
        let rules = run_conditions(&p.dataset, &[Condition::Rules], &res, &eval_config(sizes.to_vec())).unwrap();
        run.noisy.merge(smaller);
        run.noisy.merge(rules);
        let ablations = [Condition::NoConcepts, Condition::NoConceptTraining];
        run.noisy.merge(run_conditions(&p.dataset, &ablations, &res, &eval_config(vec![40])).unwrap());
    }
    let curve = |c: Condition, n: usize| mean(runs.iter().map(|r| acc(&r.noisy, c, n)));
    let taaco: Vec<f64> = sizes.iter().map(|&n| curve(Condition::Taaco, n)).collect();
    let rules: Vec<f64> = sizes.iter().map(|&n| curve(Condition::Rules, n)).collect();
    let gain = taaco[3] - taaco[0];
    out.record(
        "3 feedback curve",
        gain >= 0.05,
        format!("mean accuracy by size 10/20/30/40 [{}]; gain 40 vs 10 {gain:.3} (>= 0.05)", fmt(&taaco)),
    );

    let margin = taaco[3] - rules[3];
    let never_above = taaco.iter().zip(&rules).all(|(t, r)| r <= t);
    out.record(
        "4 baseline ordering",
        margin >= 0.10 && never_above,
        format!(
            "rules by size [{}]; margin at 40 {margin:.3} (>= 0.10); rules never above model: {never_above}",
            fmt(&rules)
        ),
    );

    let full = curve(Condition::Taaco, 40);
    let no_concepts = curve(Condition::NoConcepts, 40);
    let full_expl = mean(runs.iter().map(|r| expl(&r.noisy, Condition::Taaco, 40)));
    let nct_expl = mean(runs.iter().map(|r| expl(&r.noisy, Condition::NoConceptTraining, 40)));
    out.record(
        "5a ablation: concept tokens",
        full - no_concepts >= 0.05,
        format!("prediction accuracy full {full:.3} vs no_concepts {no_concepts:.3} (margin >= 0.05)"),
    );
    out.record(
        "5b ablation: explanation loss",
        full_expl - nct_expl >= 0.20,
        format!("explanation accuracy full {full_expl:.3} vs no_concept_training {nct_expl:.3} (margin >= 0.20)"),
    );
}

// --- criterion 9 -------------------------------------------------------------

fn criterion_9() {
    let (Ok(persona), Ok(cache)) = (std::env::var("TAACO_PUBLIC_PERSONA"), std::env::var("TAACO_PUBLIC_CACHE")) else {
        println!("SKIP 9 public dataset replay (not gating): TAACO_PUBLIC_PERSONA / TAACO_PUBLIC_CACHE not set");
        return;
    };
    let scorer_id = std::env::var("TAACO_PUBLIC_SCORER").unwrap_or_else(|_| "gpt-4".into());
    let result = (|| -> Result<f64, Box<dyn std::error::Error>> {
        let persona = load_persona(std::path::Path::new(&persona))?;
        let cache = ScoreCache::load(std::path::Path::new(&cache))?;
        let scorer = Scorer::replay(&scorer_id);
        let embedder = FallbackEmbedder::new(0, 64);
        let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
        let report = run_conditions(&persona, &[Condition::Taaco], &res, &eval_config(vec![40]))?;
        Ok(acc(&report, Condition::Taaco, 40))
    })();
    match result {
        Ok(a) => println!("INFO 9 public dataset replay (not gating): accuracy {a:.3} (reference 0.71 ± 0.10)"),
        Err(e) => println!("FAIL 9 public dataset replay (not gating): {e}"),
    }
}

fn main() {
    let mut out = Outcome { results: Vec::new() };
    criterion_1(&mut out);
    criterion_6(&mut out);
    criterion_8(&mut out);
    criterion_7(&mut out);
    if std::env::var("TAACO_ACCEPTANCE_QUICK").is_ok() {
        println!("SKIP 2-5 synthetic criteria: TAACO_ACCEPTANCE_QUICK is set");
    } else {
        synthetic_criteria(&mut out);
    }
    criterion_9();

    let failed: Vec<&str> = out.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("\n{} of {} criteria passed", out.results.len() - failed.len(), out.results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
