//! Builds the few-shot prompt for the language-model baseline and parses a
//! reply. A scripted client stands in for a live endpoint; the same code
//! runs against `HttpCompletionClient` or a `TranscriptReplay`.
//!
//!     cargo run --example llm_baseline

mod common;

use taaco::baselines::{build_fewshot_prompt, explanation_ref, llm_predict};
use taaco::cli::render_explanation;
use taaco::commonsense::TransportError;
use taaco::domain::{StateVector, TaskDescription};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let persona = common::household();
    let history = persona.samples();
    let task = TaskDescription::new(
        "light-fireplace",
        "Lighting the fireplace",
        "Warming up the house",
        &["matches", "firewood"],
        &["living room"],
    );
    let space = &persona.state_space;
    let state = StateVector::all_false(space);

    let prompt = build_fewshot_prompt(&history[..3], &task, space, &state);
    println!("--- prompt (first three examples) ---\n{prompt}\n---");

    let client = |_: &str| -> Result<String, TransportError> {
        Ok("adaptation: no_action\nexplanation: matches: involves an open flame".into())
    };
    let p = llm_predict(&client, &history, &task, space, &state)?;
    println!("label: {:?}", p.label.map(|l| l.as_str()));
    if let Some(e) = p.explanation.as_deref().and_then(|e| explanation_ref(&task, e)) {
        println!("because {}", render_explanation(&e));
    }
    Ok(())
}
