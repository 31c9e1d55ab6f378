//! The quad-directional LSTM on its own: scan orders, output layout and a
//! backward pass.
//!
//!     cargo run --example sqd_lstm_block

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqd_unwrap::nn::{Layer, Mode, Tensor4};
use sqd_unwrap::sqd::{Direction, SqdConfig, SqdLstm};

fn main() -> sqd_unwrap::Result<()> {
    let (h, w) = (2, 3);
    for dir in Direction::ALL {
        let order: Vec<_> = (0..h * w).map(|s| dir.position(s, h, w)).collect();
        println!("{:>5}: {order:?}", dir.name());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = SqdConfig { units: 8, filters: 6 };
    let mut block = SqdLstm::<f32>::init("sqd", 4, cfg, &mut rng);
    let x = Tensor4::<f32>::from_fn(2, 5, 7, 4, |b, r, c, ch| ((b + r * 3 + c * 5 + ch) as f32 * 0.37).sin());
    let y = block.forward(&x, Mode::Train)?;
    println!("input {:?} -> output {:?} (horizontal then vertical features)", x.shape(), y.shape());

    let dx = block.backward(&y.map(|_| 1.0))?;
    let n_params: usize = block.params().iter().map(|p| p.len()).sum();
    println!("backward: input gradient {:?}, {n_params} parameters", dx.shape());
    for p in block.params() {
        let norm = p.grad.iter().map(|g| g * g).sum::<f32>().sqrt();
        println!("  {:<18} {:?} |grad| {norm:.3}", p.name, p.shape);
    }
    Ok(())
}
