//! Parameter counts for the benchmark datasets at several embedding sizes.

use tucker::cli::group_thousands;
use tucker::data::BENCHMARKS;
use tucker::model::{param_count, ModelKind};

fn main() {
    println!(
        "{:<10} {:>4} {:>14} {:>14} {:>14}",
        "dataset", "d", "TuckER", "ComplEx", "DistMult"
    );
    for (name, n_e, n_r) in BENCHMARKS {
        for d in [30, 100, 200] {
            let n_r_aug = 2 * n_r;
            println!(
                "{:<10} {:>4} {:>14} {:>14} {:>14}",
                name,
                d,
                group_thousands(param_count(
                    n_e,
                    n_r_aug,
                    ModelKind::Tucker { d_e: d, d_r: d }
                )),
                group_thousands(param_count(n_e, n_r_aug, ModelKind::ComplEx { d })),
                group_thousands(param_count(n_e, n_r_aug, ModelKind::DistMult { d })),
            );
        }
    }
    // The WN18RR preset uses d_e = 200, d_r = 30.
    println!(
        "\nWN18RR preset TuckER: {}",
        group_thousands(param_count(
            40_943,
            22,
            ModelKind::Tucker { d_e: 200, d_r: 30 }
        ))
    );
}
