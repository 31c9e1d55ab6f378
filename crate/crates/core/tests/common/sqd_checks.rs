//! Structural checks of the quad-directional block, each returning a
//! description of the first violation.

use sqd_unwrap::nn::{Layer, Mode, Tensor4};
use sqd_unwrap::sqd::{extract_sequences, reassemble, Direction, SqdConfig, SqdLstm};

/// Exhaustive over every map size up to 3×4 and channel counts 1..=3: each
/// directional sequence, reassembled in its own direction, restores the map.
pub fn extract_then_reassemble() -> Result<usize, String> {
    let mut cases = 0;
    for h in 1..=3 {
        for w in 1..=4 {
            for c in 1..=3 {
                let x = Tensor4::<f64>::from_fn(2, h, w, c, |b, y, xx, ch| (((b * 7 + y) * 5 + xx) * 3 + ch) as f64);
                for b in 0..2 {
                    let seqs = extract_sequences(&x, b).map_err(|e| e.to_string())?;
                    for dir in Direction::ALL {
                        let steps: Vec<Vec<f64>> = (0..h * w).map(|s| seqs.step(dir, s).to_vec()).collect();
                        let back = reassemble(&steps, dir, h, w).map_err(|e| e.to_string())?;
                        if back.data() != x.image(b) {
                            return Err(format!("{h}x{w}x{c} {dir:?} image {b} not restored"));
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(cases)
}

pub fn output_shape(seed: u64) -> Result<(), String> {
    let mut rng = super::rng(seed);
    for (h, w, c, u, d) in [(2, 2, 1, 3, 2), (3, 4, 5, 2, 4), (4, 1, 2, 1, 3)] {
        let mut block = SqdLstm::<f64>::init("s", c, SqdConfig { units: u, filters: d }, &mut rng);
        let x = super::random_tensor(&mut rng, [2, h, w, c], 1.0);
        let shape = block.forward(&x, Mode::Infer).map_err(|e| e.to_string())?.shape();
        if shape != [2, h, w, 2 * d] {
            return Err(format!("input {h}x{w}x{c}, d={d}: got {shape:?}"));
        }
    }
    Ok(())
}

/// Zeroing the vertical LSTMs and their fusion conv must leave the
/// horizontal output channels bit-identical and the vertical ones zero.
pub fn directional_independence(seed: u64) -> Result<(), String> {
    let mut rng = super::rng(seed);
    let d = 4;
    let mut block = SqdLstm::<f64>::init("s", 2, SqdConfig { units: 3, filters: d }, &mut rng);
    let x = super::random_tensor(&mut rng, [2, 3, 4, 2], 1.0);
    let before = block.forward(&x, Mode::Infer).unwrap();
    for dir in [Direction::Down, Direction::Up] {
        for p in block.lstm_mut(dir).params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    block.fuse_v.weight.value.iter_mut().for_each(|v| *v = 0.0);
    block.fuse_v.bias.value.iter_mut().for_each(|v| *v = 0.0);
    let after = block.forward(&x, Mode::Infer).unwrap();
    let (h0, v0) = before.split_channels(d).unwrap();
    let (h1, v1) = after.split_channels(d).unwrap();
    if h0 != h1 {
        return Err("horizontal channels changed".into());
    }
    if !v1.data().iter().all(|&v| v == 0.0) || v0.data().iter().all(|&v| v == 0.0) {
        return Err("vertical channels did not respond to zeroing".into());
    }
    Ok(())
}
