//! Drives the interactive `teach` command with scripted answers: one label
//! with a condition and a reason that introduces a new concept, one skip.
//!
//!     cargo run --example teach_session

mod common;

use std::io::Cursor;

use taaco::dataio::load_persona;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let persona = dir.path().join("persona.json");
    std::fs::copy(common::data_path("household.json"), &persona)?;
    let tasks = common::data_path("candidate_tasks.json");

    let answers = "remind\nguests_present=false\niron: gets hot enough to scorch fabric; guests_present\ns\nq\n";
    let mut input = Cursor::new(answers);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = ["taaco", "teach", "--persona", persona.to_str().unwrap(), "--tasks", tasks.to_str().unwrap()];
    let code = taaco::cli::run_with_io(argv, &mut input, &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));

    let grown = load_persona(&persona)?;
    println!("\nexit {code}; persona now has {} samples and {} concepts", grown.sample_count(), grown.vocabulary.len());
    Ok(())
}
