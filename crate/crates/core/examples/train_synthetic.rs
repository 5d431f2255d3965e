//! Train on the synthetic world and watch validation MRR climb.
//!
//! `cargo run --release --example train_synthetic -- [epochs] [seed]`

use tucker::data::{generate_synthetic, FilterIndex, Split};
use tucker::eval::evaluate;
use tucker::model::DropoutRates;
use tucker::train::{fit, model_for_config, TrainConfig};

fn main() -> tucker::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let (store, vocab) = generate_synthetic(200, 0)?;
    let aug = store.augment_reciprocal()?;
    let filter = FilterIndex::build(&aug)?;
    let cfg = TrainConfig {
        lr: 0.005,
        decay: 1.0,
        d_e: 30,
        d_r: 30,
        dropout: DropoutRates::new(0.2, 0.2, 0.3),
        label_smoothing: 0.1,
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let mut model = model_for_config(vocab.n_entities(), aug.n_relations_augmented(), &cfg)?;
    println!(
        "untrained test MRR {:.4}",
        evaluate(&model, &aug, Split::Test, &filter)?.mrr
    );

    let log = fit(&mut model, &aug, &cfg, |epoch, m| {
        if (epoch + 1) % 20 == 0 {
            let r = evaluate(m, &aug, Split::Valid, &filter)?;
            println!("epoch {:>4}  valid MRR {:.4}", epoch + 1, r.mrr);
            return Ok(Some(r));
        }
        Ok(None)
    })?;
    if let Some(last) = log.records.last() {
        println!("final train loss {:.5}", last.train_loss);
    }
    print!(
        "{}",
        evaluate(&model, &aug, Split::Test, &filter)?.to_table()
    );
    Ok(())
}
