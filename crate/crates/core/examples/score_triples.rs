//! Score triples with a randomly initialized model, one at a time and 1-N.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tucker::model::init_model;

fn main() -> tucker::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    // 5 entities, 2 relations (+2 reciprocals), d_e = 4, d_r = 3.
    let model = init_model(5, 4, 4, 3, &mut rng)?;

    let z = model.score_triple(0, 1, 3)?;
    println!(
        "score(0, 1, 3) = {z:.6}  p = {:.6}",
        tucker::train::sigmoid(z)
    );

    // Every object at once; entry 3 matches the single-triple score.
    let all = model.score_all_objects(0, 1, false, &mut rng)?;
    for (o, s) in all.iter().enumerate() {
        println!("  o = {o}: {s:+.6}");
    }
    assert_eq!(all[3], z);

    let w = model.relation_matrix(1)?;
    println!("relation 1 matrix is {w}");
    Ok(())
}
