//! Analytic gradients against central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tucker::verify::{gradient_check, gradient_fixture, sample_params, FD_STEP};

fn main() -> tucker::Result<()> {
    let (model, batch, cfg) = gradient_fixture(0)?;
    let params = sample_params(&model, 5, &mut ChaCha8Rng::seed_from_u64(1));
    let checks = gradient_check(&model, &batch, &cfg, 0, &params, FD_STEP)?;
    println!(
        "{:<24} {:>16} {:>16} {:>10}",
        "parameter", "analytic", "numeric", "rel err"
    );
    for c in &checks {
        println!(
            "{:<24} {:>16.9e} {:>16.9e} {:>10.2e}",
            format!("{:?}", c.param),
            c.analytic,
            c.numeric,
            c.rel_error
        );
    }
    Ok(())
}
