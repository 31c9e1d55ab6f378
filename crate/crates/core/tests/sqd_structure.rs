//! Structural properties of the quad-directional LSTM block.

mod common;

use sqd_unwrap::nn::{Layer, Mode, Tensor4};
use sqd_unwrap::sqd::{Direction, SqdConfig, SqdLstm};

#[test]
fn extract_then_reassemble_is_identity() {
    common::sqd_checks::extract_then_reassemble().unwrap();
}

/// Every position is visited exactly once by each scan.
#[test]
fn scans_are_permutations() {
    for h in 1..=3 {
        for w in 1..=4 {
            for dir in Direction::ALL {
                let mut seen = vec![false; h * w];
                for s in 0..h * w {
                    let (r, c) = dir.position(s, h, w);
                    assert!(!seen[r * w + c]);
                    seen[r * w + c] = true;
                }
            }
        }
    }
}

#[test]
fn output_shape_is_two_d_channels() {
    common::sqd_checks::output_shape(1).unwrap();
}

#[test]
fn directional_independence() {
    common::sqd_checks::directional_independence(2).unwrap();
}

/// A pixel's horizontal features depend only on pixels before it in the
/// right scan (for the right LSTM). Perturbing the last pixel of the map
/// must leave the right-scan LSTM output at every earlier position alone.
#[test]
fn right_scan_is_causal() {
    let mut rng = common::rng(3);
    let mut block = SqdLstm::<f64>::init("s", 2, SqdConfig { units: 3, filters: 2 }, &mut rng);
    let x = common::random_tensor(&mut rng, [1, 3, 4, 2], 1.0);
    let lstm = block.lstm_mut(Direction::Right);
    let seq = sqd_unwrap::sqd::gather_sequences(&x, Direction::Right);
    let a = lstm.forward_batch(&seq, 1, 12, Mode::Infer).unwrap();
    let mut x2 = x.clone();
    let last = x2.index(0, 2, 3, 0);
    x2.data_mut()[last] += 1.0;
    let seq2 = sqd_unwrap::sqd::gather_sequences(&x2, Direction::Right);
    let b = lstm.forward_batch(&seq2, 1, 12, Mode::Infer).unwrap();
    assert_eq!(a[..11 * 3], b[..11 * 3]);
    assert_ne!(a[11 * 3..], b[11 * 3..]);
}

fn rot180(x: &Tensor4<f64>) -> Tensor4<f64> {
    let [n, h, w, c] = x.shape();
    Tensor4::from_fn(n, h, w, c, |b, y, xx, ch| x.at(b, h - 1 - y, w - 1 - xx, ch))
}

/// Kernel rotated by 180° with the two input-channel halves exchanged.
fn mirror_fusion(weight: &[f64], k: usize, cin: usize, cout: usize) -> Vec<f64> {
    let half = cin / 2;
    let mut out = vec![0.0; weight.len()];
    for ky in 0..k {
        for kx in 0..k {
            for ci in 0..cin {
                for co in 0..cout {
                    let src = ((ky * k + kx) * cin + ci) * cout + co;
                    let ci2 = (ci + half) % cin;
                    let dst = (((k - 1 - ky) * k + (k - 1 - kx)) * cin + ci2) * cout + co;
                    out[dst] = weight[src];
                }
            }
        }
    }
    out
}

/// Rotating the input by 180° turns every right scan into a left scan and
/// every down scan into an up scan. So the block with its opposite LSTMs
/// swapped and its fusion kernels mirrored, applied to the rotated input,
/// must give the rotated output of the original block.
#[test]
fn rotation_swaps_opposite_directions() {
    for seed in 0..5 {
        let mut rng = common::rng(10 + seed);
        let (u, d) = (3, 2);
        let mut block = SqdLstm::<f64>::init("s", 2, SqdConfig { units: u, filters: d }, &mut rng);
        block.fuse_h.bias.value = vec![0.3, -0.1];
        block.fuse_v.bias.value = vec![0.2, 0.4];
        let x = common::random_tensor(&mut rng, [2, 3, 5, 2], 1.0);
        let y = block.forward(&x, Mode::Infer).unwrap();

        let mut swapped = block.clone();
        swapped.lstms.swap(Direction::Right as usize, Direction::Left as usize);
        swapped.lstms.swap(Direction::Down as usize, Direction::Up as usize);
        swapped.fuse_h.weight.value = mirror_fusion(&block.fuse_h.weight.value, 3, 2 * u, d);
        swapped.fuse_v.weight.value = mirror_fusion(&block.fuse_v.weight.value, 3, 2 * u, d);
        let y_rot = swapped.forward(&rot180(&x), Mode::Infer).unwrap();
        let expect = rot180(&y);
        let err = common::rel_error(y_rot.data(), expect.data());
        assert!(err < 1e-12, "seed {seed}: {err:e}");
    }
}
