//! How each kind of misprediction is classified.
//!
//!     cargo run --example error_taxonomy

use taaco::domain::AdaptationLabel;
use taaco::evaluation::classify_error;

fn main() {
    print!("{:<12}", "pred\\truth");
    for t in AdaptationLabel::ALL {
        print!("{:<34}", t.as_str());
    }
    println!();
    for p in AdaptationLabel::ALL {
        print!("{:<12}", p.as_str());
        for t in AdaptationLabel::ALL {
            let cell = classify_error(p, t).map_or("correct", |c| c.as_str());
            print!("{cell:<34}");
        }
        println!();
    }
}
