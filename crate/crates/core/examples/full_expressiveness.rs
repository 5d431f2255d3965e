//! Any truth assignment over n_e entities and n_r relations is reproduced
//! exactly by a model with d_e = n_e and d_r = n_r.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tucker::expressiveness::{construct_full_expressive, random_world, verify_separation};

fn main() -> tucker::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n_e, n_r) = (8, 4);
    let world = random_world(n_e, n_r, 0.3, &mut rng);
    println!("{} true facts out of {}", world.len(), n_e * n_e * n_r);

    let model = construct_full_expressive(&world, n_e, n_r)?;
    let report = verify_separation(&model, &world, 0.5)?;
    print!("{}", report.to_text());
    assert!(report.is_exact());
    Ok(())
}
