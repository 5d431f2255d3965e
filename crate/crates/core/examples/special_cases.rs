//! DistMult, ComplEx, SimplE and RESCAL as constrained cores, checked
//! against their usual formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tucker::model::{
    build_complex_core, build_distmult_core, build_simple_core, constrained_model, ModelKind,
};
use tucker::verify::{run_suite, Suite, VerifyOptions};

fn main() -> tucker::Result<()> {
    let d = 2;
    let nonzeros =
        |c: &tucker::tensor::DenseTensor3| c.data().iter().filter(|v| **v != 0.0).count();
    println!(
        "DistMult core {}: {} nonzeros",
        build_distmult_core(d),
        nonzeros(&build_distmult_core(d))
    );
    println!(
        "ComplEx core  {}: {} nonzeros",
        build_complex_core(d),
        nonzeros(&build_complex_core(d))
    );
    println!(
        "SimplE core   {}: {} nonzeros",
        build_simple_core(d),
        nonzeros(&build_simple_core(d))
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = constrained_model(ModelKind::ComplEx { d: 3 }, 4, 2, &mut rng)?;
    println!(
        "ComplEx model: entity {}, relation {}, core trainable: {}",
        m.entity, m.relation, m.trainable.core
    );
    let (s, o) = (rng.random_range(0..4), rng.random_range(0..4));
    println!("score({s}, 0, {o}) = {:.6}", m.score_triple(s, 0, o)?);

    let opts = VerifyOptions {
        trials: 1000,
        ..VerifyOptions::default()
    };
    for suite in [
        Suite::DistMult,
        Suite::ComplEx,
        Suite::SimplE,
        Suite::Rescal,
    ] {
        println!("{}", run_suite(suite, &opts));
    }
    Ok(())
}
