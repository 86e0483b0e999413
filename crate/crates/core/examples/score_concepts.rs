//! Scores a task's components against the concept vocabulary, then shows
//! that a warmed cache answers every later lookup without the client.
//!
//!     cargo run --example score_concepts

mod common;

use taaco::commonsense::{build_representation, representation_size, warm_cache, ScoreCache, Scorer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let persona = common::household();
    let scorer = common::keyword_scorer();
    let cache = ScoreCache::in_memory();

    let task = &persona.tasks[1].task;
    let rep = build_representation(task, &persona.vocabulary, &scorer, &cache)?;
    println!("{}: {} entries (expected {})", task.id, rep.len(), representation_size(task, &persona.vocabulary));
    for e in rep.entries.iter().filter(|e| e.score > 0.5) {
        println!("  {:.2}  {} {} / {}", e.score, e.component_type.type_word(), e.component, e.concept);
    }

    let added = warm_cache(&persona.task_descriptions(), &persona.vocabulary, &scorer, &cache, 8)?;
    println!("warmed {added} more pairs ({} client calls so far)", scorer.client_calls());

    // the same scorer id in replay mode never needs a client
    let replay = Scorer::replay(common::KEYWORD_SCORER);
    for t in persona.task_descriptions() {
        build_representation(&t, &persona.vocabulary, &replay, &cache)?;
    }
    println!("replayed every task with {} client calls", replay.client_calls());
    Ok(())
}
