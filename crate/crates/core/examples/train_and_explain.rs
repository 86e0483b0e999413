//! Trains on the household persona, explains predictions for unseen tasks,
//! and checks that a saved checkpoint predicts identically.
//!
//!     cargo run --release --example train_and_explain

mod common;

use taaco::cli::render_explanation;
use taaco::commonsense::{build_representation, ScoreCache};
use taaco::domain::{StateVector, TaskDescription};
use taaco::embedding::FallbackEmbedder;
use taaco::personalization::{load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let persona = common::household();
    let scorer = common::keyword_scorer();
    let cache = ScoreCache::in_memory();
    let embedder = FallbackEmbedder::new(0, 64);

    let data = persona
        .samples()
        .into_iter()
        .map(|s| {
            let rep = build_representation(&s.task, &persona.vocabulary, &scorer, &cache)?;
            Ok((s, rep))
        })
        .collect::<Result<Vec<_>, taaco::commonsense::CommonsenseError>>()?;

    let config = TrainConfig::compact().with_seed(7);
    let outcome = train(&data, &persona.state_space, &persona.vocabulary, &embedder, &config)?;
    let losses = &outcome.loss_history;
    println!("trained {} epochs, loss {:.3} -> {:.3}", losses.len(), losses[0], losses[losses.len() - 1]);
    let trained = outcome.model;

    let text = std::fs::read_to_string(common::data_path("candidate_tasks.json"))?;
    let candidates: Vec<TaskDescription> = serde_json::from_str(&text)?;
    let space = &persona.state_space;
    let quiet = StateVector::all_false(space);
    let mut busy = quiet.clone();
    busy.values[space.require("guests_present")?] = true;

    for task in &candidates {
        for (name, state) in [("quiet", &quiet), ("guests", &busy)] {
            let p = trained.predict(task, state, &persona.vocabulary, &scorer, &cache, &embedder)?;
            println!(
                "{:<14} {:<7} {:<9} because {} ({:.2})",
                task.id,
                name,
                p.label.as_str(),
                render_explanation(&p.explanation),
                p.explanation_probability
            );
        }
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("household.ckpt");
    save_checkpoint(&trained, &path)?;
    let reloaded = load_checkpoint(&path)?;
    let a = trained.predict(&candidates[0], &quiet, &persona.vocabulary, &scorer, &cache, &embedder)?;
    let b = reloaded.predict(&candidates[0], &quiet, &persona.vocabulary, &scorer, &cache, &embedder)?;
    println!("checkpoint reload identical: {}", a == b);
    Ok(())
}
