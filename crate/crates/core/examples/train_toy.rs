//! Trains the reduced network on a small clean dataset, saves it, reloads
//! it and unwraps one held-out image.
//!
//!     cargo run --release --example train_toy [epochs]

use sqd_unwrap::datagen::{generate_dataset, load_dataset, GenConfig};
use sqd_unwrap::losses::Pooling;
use sqd_unwrap::network::{ArchConfig, Network};
use sqd_unwrap::phase::nrmse_offset_corrected;
use sqd_unwrap::training::{evaluate, predict, train_on, Method, TrainConfig};

fn main() -> sqd_unwrap::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let dir = std::env::temp_dir().join("sqd_train_example");
    generate_dataset(&GenConfig { count: 120, seed: 1, ..GenConfig::toy() }, &dir)?;
    let ds = load_dataset(&dir)?;

    let cfg = TrainConfig {
        arch: ArchConfig::toy(),
        pooling: Pooling::PerImage,
        epochs,
        test_count: 20,
        ..TrainConfig::new(&dir)
    };
    let mut out = train_on(&ds, &cfg, |r| {
        println!("epoch {:>2}: loss {:.4}, test NRMSE {:.2}%", r.epoch, r.train_loss, r.test_nrmse_pct)
    })?;
    let test = &out.history.split.test;
    let identity = evaluate(Method::Identity, &ds, test)?;
    let model = evaluate(Method::Model(&mut out.model), &ds, test)?;
    println!(
        "best epoch {}: model {:.2}% vs identity {:.2}% on {} images ({} parameters)",
        out.history.best_epoch,
        model.mean_nrmse_pct,
        identity.mean_nrmse_pct,
        test.len(),
        out.model.parameter_count()
    );

    let ckpt = dir.join("toy.ckpt");
    out.model.save(&ckpt)?;
    let mut reloaded = Network::<f32>::load(&ckpt)?;
    let i = test[0];
    let pred = predict(&mut reloaded, &ds.wrapped(i)?)?;
    println!("reloaded model on image {i}: {:.2}%", nrmse_offset_corrected(&pred, &ds.truth(i)?)?);
    Ok(())
}
