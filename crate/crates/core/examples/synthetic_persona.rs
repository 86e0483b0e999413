//! Generates a synthetic persona from hidden rules and writes the persona
//! file plus its truth-table score cache.
//!
//!     cargo run --example synthetic_persona -- [seed] [out-dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use taaco::commonsense::ScoreCache;
use taaco::dataio::{generate_synthetic_persona, save_persona, SyntheticShape, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let out = args.next().map(PathBuf::from);

    let spec = SyntheticSpec::sample(seed, &SyntheticShape::default());
    println!("hidden rules (first match wins, otherwise {}):", spec.default_label.as_str());
    for r in &spec.rules {
        let when = r.state.as_ref().map(|(v, b)| format!(" when {v}={b}")).unwrap_or_default();
        let what: Vec<String> = r.concepts.iter().map(|c| format!("{} '{}'", c.component_type.type_word(), c.text)).collect();
        println!("  {}{when} -> {}", what.join(" and "), r.label.as_str());
    }

    let p = generate_synthetic_persona(&spec);
    let samples = p.dataset.samples();
    let mut labels = BTreeMap::new();
    for s in &samples {
        *labels.entry(s.adaptation.as_str()).or_insert(0) += 1;
    }
    let explained = samples.iter().filter(|s| s.explanation.is_some()).count();
    println!(
        "{} tasks, {} samples ({explained} explained), labels {labels:?}",
        p.dataset.tasks.len(),
        samples.len()
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        save_persona(&p.dataset, &dir.join("persona.json"))?;
        ScoreCache::from_entries(p.oracle_cache).write_all(&dir.join("scores.jsonl"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
