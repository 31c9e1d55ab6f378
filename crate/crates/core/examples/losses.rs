//! Why the composite loss suits phase unwrapping: it ignores the global
//! offset that a wrapped observation cannot pin down, while MSE does not.
//!
//!     cargo run --example losses

use sqd_unwrap::losses::{l_c, l_tv, l_var, loss_and_grad, mse, LossKind, LossWeights, Pooling};
use sqd_unwrap::nn::Tensor4;

fn main() -> sqd_unwrap::Result<()> {
    let truth = Tensor4::<f64>::from_fn(1, 8, 8, 1, |_, r, c, _| 0.4 * r as f64 + 0.1 * (c * c) as f64);
    let w = LossWeights::default();
    println!("{:>26} {:>10} {:>10} {:>10} {:>10}", "prediction", "mse", "l_var", "l_tv", "l_c");
    for (name, pred) in [
        ("truth", truth.clone()),
        ("truth + 2pi", truth.map(|v| v + std::f64::consts::TAU)),
        ("truth + 100", truth.map(|v| v + 100.0)),
        ("truth * 1.1", truth.map(|v| v * 1.1)),
        ("flat", truth.map(|_| 0.0)),
    ] {
        println!(
            "{name:>26} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            mse(&pred, &truth)?,
            l_var(&pred, &truth)?,
            l_tv(&pred, &truth)?,
            l_c(&pred, &truth, &w)?
        );
    }

    // The gradient of l_c sums to zero: it never pushes the mean.
    let pred = truth.map(|v| v * 0.9 + 3.0);
    let (value, grad) = loss_and_grad(LossKind::Lc, &pred, &truth, &w, Pooling::Joint)?;
    println!("l_c = {:.4}, sum of gradient = {:.1e}", value.total, grad.data().iter().sum::<f64>());
    Ok(())
}
