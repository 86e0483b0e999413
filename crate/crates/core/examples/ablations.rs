//! Compares the full model with its two ablations: component tokens instead
//! of concept tokens, and training without the explanation loss.
//!
//!     cargo run --release --example ablations

use taaco::commonsense::{ScoreCache, Scorer};
use taaco::dataio::{generate_synthetic_persona, SyntheticShape, SyntheticSpec, ORACLE_SCORER};
use taaco::embedding::FallbackEmbedder;
use taaco::evaluation::{run_ablation, run_feedback_curve, Ablation, Condition, EvalConfig, EvalResources};
use taaco::personalization::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = generate_synthetic_persona(&SyntheticSpec::sample(2, &SyntheticShape::default()));
    let cache = ScoreCache::from_entries(p.oracle_cache);
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 64);
    let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let config = EvalConfig { sizes: vec![40], folds: 3, train: TrainConfig::compact(), ..EvalConfig::default() };

    let mut report = run_feedback_curve(&p.dataset, Condition::Taaco, &res, &config)?;
    report.merge(run_ablation(&p.dataset, Ablation::NoConcepts, &res, &config)?);
    report.merge(run_ablation(&p.dataset, Ablation::NoConceptTraining, &res, &config)?);
    for row in &report.rows {
        let m = &row.metrics;
        let expl = m.explanation_accuracy.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        println!("{:<20} prediction {:.2}  explanation {expl}", row.condition.as_str(), m.prediction_accuracy);
    }
    Ok(())
}
