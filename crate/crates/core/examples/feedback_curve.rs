//! Cross-validated accuracy as the number of training tasks grows, for the
//! learned model and the rule baseline, on a synthetic persona whose scores
//! come from its truth table.
//!
//!     cargo run --release --example feedback_curve

use taaco::commonsense::{ScoreCache, Scorer};
use taaco::dataio::{generate_synthetic_persona, SyntheticShape, SyntheticSpec, ORACLE_SCORER};
use taaco::embedding::FallbackEmbedder;
use taaco::evaluation::{run_conditions, Condition, EvalConfig, EvalResources};
use taaco::personalization::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = generate_synthetic_persona(&SyntheticSpec::sample(1, &SyntheticShape::default()));
    let cache = ScoreCache::from_entries(p.oracle_cache);
    let scorer = Scorer::replay(ORACLE_SCORER);
    let embedder = FallbackEmbedder::new(0, 64);
    let res = EvalResources { scorer: &scorer, cache: &cache, embedder: &embedder, llm: None };
    let config = EvalConfig { sizes: vec![10, 20, 40], folds: 3, train: TrainConfig::compact(), ..EvalConfig::default() };

    let report = run_conditions(&p.dataset, &[Condition::Taaco, Condition::Rules], &res, &config)?;
    for c in [Condition::Taaco, Condition::Rules] {
        let accs: Vec<String> = config
            .sizes
            .iter()
            .map(|&n| format!("{n}: {:.2}", report.row(c, n).unwrap().metrics.prediction_accuracy))
            .collect();
        println!("{:<6} {}", c.as_str(), accs.join("  "));
    }
    print!("\n{}", report.to_table());
    Ok(())
}
