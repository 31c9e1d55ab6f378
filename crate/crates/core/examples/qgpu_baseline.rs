//! The quality-guided path-following baseline on a clean and a noisy image.
//!
//!     cargo run --release --example qgpu_baseline

use sqd_unwrap::datagen::{generate_sample, GenConfig};
use sqd_unwrap::phase::{add_noise, congruence_fraction, nrmse_offset_corrected, wrap, NoiseSpec, PhaseImage};
use sqd_unwrap::qgpu::{qgpu_unwrap, quality_map};

fn main() -> sqd_unwrap::Result<()> {
    let cfg = GenConfig::for_size(128);
    let sample = generate_sample(&cfg, 0)?;
    let n = cfg.image_size;
    let truth = PhaseImage::from_f32(n, n, &sample.truth)?;

    let clean = wrap(&truth);
    let out = qgpu_unwrap(&clean)?;
    println!("clean:  NRMSE {:.2e}%", nrmse_offset_corrected(&out, &truth)?);

    for snr in [20.0, 10.0, 0.0] {
        let observed = wrap(&add_noise(&truth, &NoiseSpec::new(snr, 3))?);
        let q = quality_map(&observed)?;
        let mean_q = q.values.iter().sum::<f64>() / q.values.len() as f64;
        let out = qgpu_unwrap(&observed)?;
        println!(
            "{snr:>4} dB: NRMSE {:6.2}%, mean quality {mean_q:.3}, congruence {:.3}",
            nrmse_offset_corrected(&out, &truth)?,
            congruence_fraction(&out, &observed, 1e-3)?
        );
    }
    Ok(())
}
