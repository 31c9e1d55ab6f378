//! Wrapping a smooth phase, undoing it in 1-D with Itoh's method, and what
//! noise does to the picture.
//!
//!     cargo run --example wrap_and_itoh

use sqd_unwrap::phase::{
    add_noise, congruence_fraction, itoh_unwrap_1d, nrmse, nrmse_offset_corrected, wrap, wrap_values, NoiseSpec,
    PhaseImage,
};

fn main() -> sqd_unwrap::Result<()> {
    // A chirp: steps grow along the line but stay below pi.
    let phi: Vec<f64> = (0..40).map(|i| 0.002 * (i * i) as f64 + 0.3 * i as f64).collect();
    let psi = wrap_values(&phi)?;
    let back = itoh_unwrap_1d(&psi);
    let worst = back.iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("1-D: last true {:.3}, wrapped {:.3}, recovered {:.3}, max error {worst:.1e}", phi[39], psi[39], back[39]);

    let truth = PhaseImage::from_fn(64, 64, |r, c| {
        let (y, x) = (r as f64 - 32.0, c as f64 - 28.0);
        12.0 * (-(x * x + y * y) / 300.0).exp() + 0.05 * c as f64
    })?;
    let wrapped = wrap(&truth);
    println!(
        "2-D: truth in [{:.2}, {:.2}], wrapped in [{:.2}, {:.2}]",
        truth.min(),
        truth.max(),
        wrapped.as_phase().min(),
        wrapped.as_phase().max()
    );
    println!("identity NRMSE {:.2}% (raw {:.2}%)", nrmse_offset_corrected(&wrapped.as_phase(), &truth)?, nrmse(&wrapped.as_phase(), &truth)?);

    // Offsetting by any constant leaves the corrected score unchanged.
    let shifted = truth.offset(7.5);
    println!("truth + 7.5: raw {:.2}%, corrected {:.1e}%", nrmse(&shifted, &truth)?, nrmse_offset_corrected(&shifted, &truth)?);

    for snr in [60.0, 20.0, 5.0] {
        let spec = NoiseSpec::new(snr, 1);
        let noisy = add_noise(&truth, &spec)?;
        let close = congruence_fraction(&truth, &wrap(&noisy), 0.5)?;
        println!(
            "{snr:>4} dB: sigma {:.3} rad, noisy NRMSE {:.2}%, {:.1}% of wrapped pixels within 0.5 rad of clean",
            spec.sigma_for(truth.variance()),
            nrmse(&noisy, &truth)?,
            100.0 * close
        );
    }
    Ok(())
}
