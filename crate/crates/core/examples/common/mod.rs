//! Shared helpers for the examples: the bundled household persona and a
//! small keyword-matching stand-in for a language-model scorer, so every
//! example runs offline.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use taaco::commonsense::{Scorer, ScoringMode, TransportError};
use taaco::dataio::{load_persona, PersonaDataset};

pub const KEYWORD_SCORER: &str = "keyword-demo";

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

pub fn household() -> PersonaDataset {
    load_persona(&data_path("household.json")).expect("bundled persona is valid")
}

// (component keyword, concept) pairs the stand-in scorer believes in.
const ASSOCIATIONS: &[(&str, &str)] = &[
    ("drill", "can cause major damage or harm if done imprecisely"),
    ("drill", "can easily hurt someone without intending to"),
    ("drill", "makes a lot of noise"),
    ("vacuum", "makes a lot of noise"),
    ("mow", "makes a lot of noise"),
    ("lawn mower", "can easily hurt someone without intending to"),
    ("knife", "can easily hurt someone without intending to"),
    ("chopping", "can cause major damage or harm if done imprecisely"),
    ("iron", "can easily hurt someone without intending to"),
    ("cooking", "a user might prefer doing themselves if they enjoy making food"),
    ("baking", "a user might prefer doing themselves if they enjoy making food"),
    ("breakfast", "falls under food preparation tasks"),
    ("lunch", "falls under food preparation tasks"),
    ("dinner", "falls under food preparation tasks"),
    ("stove", "involves an open flame"),
    ("stove", "is used for cooking"),
    ("frying pan", "is used for cooking"),
    ("oven", "is used for cooking"),
    ("candles", "involves an open flame"),
    ("lighter", "involves an open flame"),
    ("glass", "is fragile"),
    ("dishes", "is fragile"),
    ("mug", "is fragile"),
    ("pill", "is a personal item"),
    ("clothes", "is a personal item"),
    ("shirts", "is a personal item"),
    ("sorting pills", "involves handling personal belongings"),
    ("folding", "involves handling personal belongings"),
    ("plants", "is a living being"),
    ("plants", "likes to be cared for by the user"),
    ("dog", "is a living being"),
    ("dog", "likes to be cared for by the user"),
    ("bucket", "is heavy"),
    ("trash bag", "is heavy"),
    ("lawn mower", "is heavy"),
    ("cleaning", "is a cleaning task"),
    ("tidying", "is a cleaning task"),
    ("tidying", "is a mundane chore that robots can assist with effectively"),
    ("chores", "is a mundane chore that robots can assist with effectively"),
    ("laundry", "is a mundane chore that robots can assist with effectively"),
    ("house plants", "is something the user enjoys doing"),
    ("gardening", "is something the user enjoys doing"),
    ("decorating", "a user might want to be carried out in a particular manner"),
    ("bedroom", "is a private space"),
    ("bathroom", "is a private space"),
    ("bathroom", "is a tight space"),
    ("hallway", "is a tight space"),
    ("backyard", "is outdoors"),
    ("garage", "is outdoors"),
    ("living room", "is a shared living area"),
    ("kitchen", "is a shared living area"),
    ("dining room", "is a shared living area"),
    ("vacuuming", "requires moving around the user a lot"),
    ("scrubbing", "is very tiring"),
    ("mowing", "is very tiring"),
];

/// Answers a scoring prompt with 9 for a known association and 2 otherwise.
pub fn keyword_answer(prompt: &str) -> Result<String, TransportError> {
    let component = prompt.split('\'').nth(1).unwrap_or("").to_lowercase();
    let concept = prompt
        .split("description: it ")
        .nth(1)
        .and_then(|s| s.split("? Answer").next())
        .unwrap_or("");
    let hit = ASSOCIATIONS.iter().any(|(k, c)| component.contains(k) && *c == concept);
    Ok(if hit { "9" } else { "2" }.to_string())
}

pub fn keyword_scorer() -> Scorer {
    Scorer::live(KEYWORD_SCORER, Arc::new(keyword_answer), ScoringMode::Strict)
}
