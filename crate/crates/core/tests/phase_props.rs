//! Property tests for wrapping, 1-D unwrapping and the error metrics.

use proptest::prelude::*;
use std::f64::consts::PI;

use sqd_unwrap::phase::{
    add_noise, congruence_fraction, itoh_unwrap_1d, nrmse, nrmse_offset_corrected, wrap, wrap_scalar, NoiseSpec,
    PhaseImage, TWO_PI,
};

/// Starting point plus steps strictly inside (-π, π).
fn smooth_sequence() -> impl Strategy<Value = Vec<f64>> {
    (-50.0..50.0f64, prop::collection::vec(-3.1..3.1f64, 1..200)).prop_map(|(start, steps)| {
        let mut v = vec![start];
        for s in steps {
            let last = *v.last().unwrap();
            v.push(last + s);
        }
        v
    })
}

proptest! {
    #[test]
    fn wrap_lands_in_half_open_range(phi in -1e4..1e4f64) {
        let w = wrap_scalar(phi);
        prop_assert!(w > -PI && w <= PI);
        let k = (phi - w) / TWO_PI;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn wrap_is_idempotent(phi in -1e4..1e4f64) {
        let once = wrap_scalar(phi);
        prop_assert_eq!(wrap_scalar(once), once);
    }

    #[test]
    fn wrap_is_two_pi_periodic(phi in -100.0..100.0f64, n in -20i32..20) {
        let a = wrap_scalar(phi + TWO_PI * n as f64);
        let b = wrap_scalar(phi);
        // Both sides of the ±π seam denote the same angle.
        prop_assert!(wrap_scalar(a - b).abs() < 1e-9);
    }

    #[test]
    fn itoh_recovers_smooth_sequences(seq in smooth_sequence()) {
        let wrapped: Vec<f64> = seq.iter().map(|&v| wrap_scalar(v)).collect();
        let out = itoh_unwrap_1d(&wrapped);
        let k = (out[0] - seq[0]) / TWO_PI;
        prop_assert!((k - k.round()).abs() < 1e-9);
        for (o, s) in out.iter().zip(&seq) {
            prop_assert!((o - s - k.round() * TWO_PI).abs() < 1e-6);
        }
    }

    #[test]
    fn nrmse_offset_corrected_ignores_constants(
        vals in prop::collection::vec(-20.0..20.0f64, 16),
        noise in prop::collection::vec(-1.0..1.0f64, 16),
        c in -100.0..100.0f64,
    ) {
        let truth = PhaseImage::new(4, 4, vals.clone()).unwrap();
        prop_assume!(truth.range() > 1e-3);
        let pred = PhaseImage::new(4, 4, vals.iter().zip(&noise).map(|(a, b)| a + b).collect()).unwrap();
        let a = nrmse_offset_corrected(&pred, &truth).unwrap();
        let b = nrmse_offset_corrected(&pred.offset(c), &truth).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
        prop_assert!(a <= nrmse(&pred, &truth).unwrap() + 1e-12);
    }

    #[test]
    fn truth_is_fully_congruent(vals in prop::collection::vec(-30.0..30.0f64, 12), k in -3i32..3) {
        let truth = PhaseImage::new(3, 4, vals).unwrap();
        let shifted = truth.offset(TWO_PI * k as f64);
        prop_assert_eq!(congruence_fraction(&shifted, &wrap(&truth), 1e-6).unwrap(), 1.0);
    }
}

#[test]
fn itoh_ramp_example() {
    let out = itoh_unwrap_1d(&[0.0, 2.0, 4.0 - TWO_PI, 6.0 - TWO_PI]);
    for (o, e) in out.iter().zip([0.0, 2.0, 4.0, 6.0]) {
        assert!((o - e).abs() < 1e-12);
    }
}

/// Measured SNR of the injected noise matches the request.
#[test]
fn noise_power_matches_snr() {
    let clean = PhaseImage::from_fn(128, 128, |r, c| (r as f64 * 0.05).sin() * 4.0 + c as f64 * 0.02).unwrap();
    for snr in [0.0, 5.0, 10.0, 20.0] {
        let noisy = add_noise(&clean, &NoiseSpec::new(snr, 7)).unwrap();
        let p_noise = noisy
            .values()
            .iter()
            .zip(clean.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / clean.values().len() as f64;
        let measured = 10.0 * (clean.variance() / p_noise).log10();
        assert!((measured - snr).abs() < 0.1, "asked {snr} dB, measured {measured}");
    }
}
