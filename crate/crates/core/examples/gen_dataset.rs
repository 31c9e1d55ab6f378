//! Generates a small noisy dataset, reloads it and looks at a few images.
//!
//!     cargo run --release --example gen_dataset [out_dir]

use sqd_unwrap::datagen::{generate_dataset, load_dataset, split_indices, GenConfig, DEFAULT_NOISE_MENU};

fn main() -> sqd_unwrap::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("sqd_gen_example"));
    let cfg = GenConfig { count: 50, seed: 7, ..GenConfig::toy().with_noise(&DEFAULT_NOISE_MENU) };
    let manifest = generate_dataset(&cfg, &out)?;
    println!("wrote {} images of {}x{} to {}", manifest.count, manifest.height, manifest.width, out.display());

    let ds = load_dataset(&out)?;
    for i in 0..5 {
        let truth = ds.truth(i)?;
        let snr = ds.snr(i).map_or("clean".to_string(), |s| format!("{s} dB"));
        println!(
            "image {i}: {snr:>6}, truth range [{:6.2}, {:6.2}], fringes ~{:.1}",
            truth.min(),
            truth.max(),
            truth.range() / std::f64::consts::TAU
        );
    }
    let split = split_indices(ds.len(), 10, 0)?;
    println!("split: {} train, {} test, first test index {}", split.train.len(), split.test.len(), split.test[0]);

    // Same config, same bytes.
    let again = generate_dataset(&cfg, &out.join("again"))?;
    assert_eq!(again.records, manifest.records);
    Ok(())
}
