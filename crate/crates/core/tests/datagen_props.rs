//! Statistical and determinism checks on the synthetic data.

use sqd_unwrap::datagen::{generate_dataset, generate_sample, image_rng, synth_phase, GenConfig, DEFAULT_NOISE_MENU};
use std::f64::consts::PI;

#[test]
fn default_surfaces_stay_in_range() {
    let cfg = GenConfig::default();
    for i in 0..1000 {
        let img = synth_phase(&mut image_rng(11, i), &cfg).unwrap();
        assert!(img.min() >= -44.0 && img.max() <= 44.0, "image {i}: [{}, {}]", img.min(), img.max());
    }
}

#[test]
fn default_surfaces_are_smooth() {
    let cfg = GenConfig::default();
    for i in 0..100 {
        let img = synth_phase(&mut image_rng(12, i), &cfg).unwrap();
        let (h, w) = img.dims();
        let mut steps = Vec::with_capacity(2 * h * w);
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w {
                    steps.push((img.get(r, c + 1) - img.get(r, c)).abs());
                }
                if r + 1 < h {
                    steps.push((img.get(r + 1, c) - img.get(r, c)).abs());
                }
            }
        }
        steps.sort_by(f64::total_cmp);
        let p99 = steps[steps.len() * 99 / 100];
        assert!(p99 < PI, "image {i}: p99 step {p99}");
    }
}

#[test]
fn noise_levels_are_uniform() {
    let cfg = GenConfig {
        count: 5000,
        ..GenConfig::for_size(16)
    }
    .with_noise(&DEFAULT_NOISE_MENU);
    let mut counts = [0usize; 5];
    for i in 0..cfg.count {
        let s = generate_sample(&cfg, i).unwrap().snr_db.unwrap();
        counts[DEFAULT_NOISE_MENU.iter().position(|&v| v == s).unwrap()] += 1;
    }
    for (level, c) in DEFAULT_NOISE_MENU.iter().zip(counts) {
        let f = c as f64 / cfg.count as f64;
        assert!((f - 0.2).abs() < 0.03, "{level} dB drawn {f:.3}");
    }
}

#[test]
fn generation_is_byte_identical() {
    let cfg = GenConfig {
        count: 10,
        seed: 7,
        ..GenConfig::for_size(32)
    }
    .with_noise(&DEFAULT_NOISE_MENU);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, a.path()).unwrap();
    generate_dataset(&cfg, b.path()).unwrap();
    for f in ["manifest.json", "wrapped.bin", "truth.bin"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn wrapped_values_in_range_even_with_noise() {
    let cfg = GenConfig {
        count: 20,
        ..GenConfig::for_size(32)
    }
    .with_noise(&[0.0]);
    for i in 0..cfg.count {
        let s = generate_sample(&cfg, i).unwrap();
        assert!(s.wrapped.iter().all(|&v| v > -std::f32::consts::PI && v <= std::f32::consts::PI));
    }
}
