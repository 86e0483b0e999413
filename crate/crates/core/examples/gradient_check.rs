//! Checks the model's analytic gradients of the full loss (label
//! cross-entropy plus explanation BCE) against central differences.
//!
//!     cargo run --release --example gradient_check

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taaco::commonsense::{build_representation, ConceptLists, ConceptVocabulary, Provenance, ScoreCache};
use taaco::domain::{AdaptationLabel, ComponentType, ExplanationItem, FeedbackSample, StateConstraint, StateSpace, TaskDescription};
use taaco::embedding::FallbackEmbedder;
use taaco::neuralnet::finite_difference_check;
use taaco::personalization::{expand_feedback, EmbeddingBank, ModelConfig, TaacoModel, Tokenization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lists = ConceptLists {
        action: vec!["makes a lot of noise".into(), "is very tiring".into()],
        object: vec!["is fragile".into()],
        location: vec!["is a private space".into()],
        ..Default::default()
    };
    let vocab = ConceptVocabulary::from_lists(&lists, Provenance::Base);
    let space = StateSpace::new(&["weekend", "guests_present"])?;
    let task = TaskDescription::new("rug", "Vacuuming the rug", "Cleaning the house", &["vacuum cleaner"], &["bedroom"]);
    let rep = build_representation(&task, &vocab, &common::keyword_scorer(), &ScoreCache::in_memory())?;

    let embedder = FallbackEmbedder::new(0, 6);
    let bank = EmbeddingBank::for_model(&embedder, &vocab, Tokenization::Concepts, &[])?;
    let sample = FeedbackSample::new(task, AdaptationLabel::DoLater)
        .with_constraint(StateConstraint::new().with("guests_present", true))
        .with_explanation(vec![
            ExplanationItem::component("Vacuuming the rug", ComponentType::Action, "makes a lot of noise"),
            ExplanationItem::state("guests_present"),
        ]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points = expand_feedback(&sample, &space, &rep, 3, &mut rng)?
        .iter()
        .map(|p| p.prepare(&space, &vocab, &bank, Tokenization::Concepts))
        .collect::<Result<Vec<_>, _>>()?;

    for seed in 0..3 {
        let config = ModelConfig { embed_dim: 4, layers: 2, heads: 2, ffn_dim: 6, seed };
        let mut model = TaacoModel::new(config, space.len(), bank.dim())?;
        let err = finite_difference_check(
            &mut model,
            |m| m.loss_and_gradients(&points, &bank, 20.0).expect("shapes agree").total,
            100,
            1e-5,
            seed,
        )?;
        println!("init seed {seed}: max relative error {err:.2e}");
    }
    Ok(())
}
