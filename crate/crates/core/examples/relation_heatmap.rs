//! Learned relation matrices. After training on the synthetic world, the
//! symmetric relation `similar_to` has the most symmetric matrix and nearly
//! symmetric scores; the order relation `precedes` does not.
//!
//! Batch normalization acts on the subject side only, so symmetric scores do
//! not force an exactly symmetric matrix.

use tucker::data::generate_synthetic;
use tucker::model::{symmetry_score, DropoutRates, TuckerModel};
use tucker::train::{fit, model_for_config, TrainConfig};

/// `Σ |z(s,r,o) − z(o,r,s)| / Σ (|z(s,r,o)| + |z(o,r,s)|)` over the first 50 entities.
fn score_asymmetry(model: &TuckerModel, r: usize) -> tucker::Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..50 {
        for o in 0..50 {
            let (a, b) = (model.score_triple(s, r, o)?, model.score_triple(o, r, s)?);
            num += (a - b).abs();
            den += a.abs() + b.abs();
        }
    }
    Ok(num / den)
}

fn main() -> tucker::Result<()> {
    let (store, vocab) = generate_synthetic(200, 0)?;
    let aug = store.augment_reciprocal()?;
    let cfg = TrainConfig {
        lr: 0.005,
        d_e: 30,
        d_r: 30,
        dropout: DropoutRates::new(0.2, 0.2, 0.3),
        epochs: 200,
        ..TrainConfig::default()
    };
    let mut model = model_for_config(vocab.n_entities(), aug.n_relations_augmented(), &cfg)?;
    fit(&mut model, &aug, &cfg, |_, _| Ok(None))?;

    println!(
        "{:<12} {:>15} {:>15}",
        "relation", "symmetry_score", "score asym."
    );
    for (r, name) in vocab.relations().iter().enumerate() {
        let w = model.relation_matrix(r)?;
        println!(
            "{name:<12} {:>15.4} {:>15.4}",
            symmetry_score(&w)?,
            score_asymmetry(&model, r)?
        );
    }
    let w = model.relation_matrix(vocab.relation_id("similar_to").expect("known relation"))?;
    println!("\nsimilar_to, top-left 5x5:");
    for i in 0..5 {
        let row: Vec<String> = w.row(i)[..5].iter().map(|v| format!("{v:+.3}")).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
