//! Finite-difference checks of every analytic gradient, in double precision.

mod common;

const SEEDS: u64 = 20;

#[test]
fn primitives_match_central_differences() {
    for seed in 0..SEEDS {
        for (name, err) in common::primitive_errors(seed) {
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err:.3e}");
        }
    }
}

#[test]
fn composed_network_matches_central_differences() {
    for seed in 0..SEEDS {
        let err = common::network_error(seed, true);
        assert!(err < 1e-3, "seed {seed}: relative error {err:.3e}");
    }
}

#[test]
fn unet_ablation_matches_central_differences() {
    for seed in 0..5 {
        let err = common::network_error(seed, false);
        assert!(err < 1e-3, "seed {seed}: relative error {err:.3e}");
    }
}
