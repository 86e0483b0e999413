//! Induces keyword rules from the household persona's explanations and
//! applies them to unseen tasks.
//!
//!     cargo run --example rule_baseline

mod common;

use taaco::baselines::{induce_rules, rule_predict};
use taaco::cli::render_rule;
use taaco::domain::{StateVector, TaskDescription};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let persona = common::household();
    let rules = induce_rules(&persona.samples());
    println!("{} rules, default {}", rules.rules.len(), rules.default_label.as_str());
    for r in &rules.rules {
        println!("  {} -> {}", render_rule(r), r.label.as_str());
    }

    let text = std::fs::read_to_string(common::data_path("candidate_tasks.json"))?;
    let candidates: Vec<TaskDescription> = serde_json::from_str(&text)?;
    let space = &persona.state_space;
    let mut asleep = StateVector::all_false(space);
    asleep.values[space.require("user_asleep")?] = true;
    for task in &candidates {
        let (label, why) = rule_predict(&rules, task, space, &asleep);
        let why = why.map(render_rule).unwrap_or_else(|| "no rule applies".into());
        println!("{:<14} {:<9} ({why})", task.id, label.as_str());
    }
    Ok(())
}
