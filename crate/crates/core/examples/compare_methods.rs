//! Scores the classical methods per SNR bucket and prints the sweep CSV.
//! Pass a checkpoint to include a trained network.
//!
//!     cargo run --release --example compare_methods [model.ckpt]

use sqd_unwrap::cli::sweep_csv;
use sqd_unwrap::datagen::{generate_dataset, load_dataset, GenConfig, DEFAULT_NOISE_MENU};
use sqd_unwrap::network::Network;
use sqd_unwrap::training::{evaluate_timed, Method};

fn main() -> sqd_unwrap::Result<()> {
    let dir = std::env::temp_dir().join("sqd_compare_example");
    generate_dataset(&GenConfig { count: 100, seed: 2, ..GenConfig::toy().with_noise(&DEFAULT_NOISE_MENU) }, &dir)?;
    let ds = load_dataset(&dir)?;
    let all: Vec<usize> = (0..ds.len()).collect();

    let mut reports = Vec::new();
    for method in [Method::Identity, Method::Qgpu, Method::Oracle] {
        let (r, secs) = evaluate_timed(method, &ds, &all)?;
        println!("{:<9} mean {:6.2}%  median {:6.2}%  {:.1} ms/image", r.method, r.mean_nrmse_pct, r.median_nrmse_pct, secs * 1e3);
        reports.push(r);
    }
    if let Some(path) = std::env::args().nth(1) {
        let mut net = Network::<f32>::load(path.as_ref())?;
        let (r, secs) = evaluate_timed(Method::Model(&mut net), &ds, &all)?;
        println!("{:<9} mean {:6.2}%  median {:6.2}%  {:.1} ms/image", r.method, r.mean_nrmse_pct, r.median_nrmse_pct, secs * 1e3);
        reports.push(r);
    }
    print!("\n{}", sweep_csv(&reports));
    Ok(())
}
