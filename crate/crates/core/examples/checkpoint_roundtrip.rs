//! Save a model with its vocabulary, load it back, and compare.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tucker::data::generate_synthetic;
use tucker::model::{checkpoint, init_model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_, vocab) = generate_synthetic(40, 1)?;
    let model = init_model(
        vocab.n_entities(),
        vocab.n_relations_augmented(),
        6,
        4,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;

    let dir = std::env::temp_dir().join("tucker-checkpoint-example");
    checkpoint::save(&dir, &model, Some(&vocab))?;
    let (loaded, loaded_vocab) = checkpoint::load(&dir)?;
    assert_eq!(loaded, model);
    assert_eq!(loaded_vocab.as_ref(), Some(&vocab));

    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        let len = entry.metadata().map(|m| m.len()).unwrap_or(0);
        println!("{:<16} {len:>8} bytes", entry.file_name().to_string_lossy());
    }
    println!("round trip is bit-exact: {}", loaded == model);
    Ok(())
}
