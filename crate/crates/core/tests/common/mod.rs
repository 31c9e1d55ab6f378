//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqd_unwrap::nn::{Layer, Mode, Tensor4};

pub mod sqd_checks;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor4<f64> {
    let [n, h, w, c] = shape;
    Tensor4::from_fn(n, h, w, c, |_, _, _, _| rng.random_range(-scale..scale))
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-5)`. The floor keeps gradients that are
/// exactly zero in theory (a conv bias feeding batch norm) from turning
/// round-off into a relative error of one.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-5)
}

/// Central-difference estimate of `d f / d v[i]` for each listed `i`.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, v: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut work = v.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Up to `max` coordinates out of `len`, spread deterministically.
pub fn sample_coords(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Worst relative error over the input and every trainable parameter of
/// `layer` for the scalar objective `⟨layer(x), r⟩`.
pub fn check_layer<L: Layer<f64> + Clone>(layer: &L, x: &Tensor4<f64>, rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let mut probe = layer.clone();
    let y = probe.forward(x, Mode::Train).unwrap();
    let [n, h, w, c] = y.shape();
    let r = random_tensor(rng, [n, h, w, c], 1.0);
    let objective = |l: &mut L, input: &Tensor4<f64>| l.forward(input, Mode::Train).unwrap().dot(&r);

    let mut analytic = layer.clone();
    analytic.forward(x, Mode::Train).unwrap();
    let dx = analytic.backward(&r).unwrap();

    let step = 1e-6;
    let mut worst = 0.0f64;
    let coords = sample_coords(rng, x.data().len(), samples);
    let num = numeric_grad(
        |v| {
            let t = Tensor4::from_vec(x.n(), x.h(), x.w(), x.c(), v.to_vec()).unwrap();
            objective(&mut layer.clone(), &t)
        },
        x.data(),
        &coords,
        step,
    );
    let ana: Vec<f64> = coords.iter().map(|&i| dx.data()[i]).collect();
    worst = worst.max(rel_error(&ana, &num));

    let n_params = analytic.params().len();
    for p in 0..n_params {
        let (trainable, value, grad) = {
            let ps = analytic.params();
            (ps[p].trainable, ps[p].value.clone(), ps[p].grad.clone())
        };
        if !trainable {
            continue;
        }
        let coords = sample_coords(rng, value.len(), samples);
        let num = numeric_grad(
            |v| {
                let mut l = layer.clone();
                l.params_mut()[p].value.copy_from_slice(v);
                objective(&mut l, x)
            },
            &value,
            &coords,
            step,
        );
        let ana: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        let e = rel_error(&ana, &num);
        worst = worst.max(e);
    }
    worst
}

use sqd_unwrap::losses::{loss_and_grad, LossKind, LossWeights, Pooling};
use sqd_unwrap::network::{ArchConfig, Network};
use sqd_unwrap::nn::{BatchNorm, Conv2d, ConvTranspose3x3S2, Lstm, MaxPool2, Relu};
use sqd_unwrap::sqd::{SqdConfig, SqdLstm};

fn check_lstm(seed: u64, samples: usize) -> f64 {
    let mut rng = rng(seed);
    let (n, len, c, u) = (2, 5, 3, 4);
    let lstm = Lstm::<f64>::init("lstm", c, u, &mut rng);
    let x: Vec<f64> = (0..n * len * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..n * len * u).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |l: &mut Lstm<f64>, x: &[f64]| -> f64 {
        let y = l.forward_batch(x, n, len, Mode::Train).unwrap();
        y.iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let mut analytic = lstm.clone();
    analytic.forward_batch(&x, n, len, Mode::Train).unwrap();
    let dx = analytic.backward_batch(&r).unwrap();
    let coords = sample_coords(&mut rng, x.len(), samples);
    let num = numeric_grad(|v| objective(&mut lstm.clone(), v), &x, &coords, 1e-6);
    let ana: Vec<f64> = coords.iter().map(|&i| dx[i]).collect();
    let mut worst = rel_error(&ana, &num);
    for p in 0..3 {
        let value = lstm.params()[p].value.clone();
        let grad = analytic.params()[p].grad.clone();
        let coords = sample_coords(&mut rng, value.len(), samples);
        let num = numeric_grad(
            |v| {
                let mut l = lstm.clone();
                l.params_mut()[p].value.copy_from_slice(v);
                objective(&mut l, &x)
            },
            &value,
            &coords,
            1e-6,
        );
        let ana: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        let e = rel_error(&ana, &num);
        worst = worst.max(e);
    }
    worst
}

fn check_loss(seed: u64, kind: LossKind, pooling: Pooling) -> f64 {
    let mut rng = rng(seed);
    let pred = random_tensor(&mut rng, [2, 5, 6, 1], 3.0);
    let truth = random_tensor(&mut rng, [2, 5, 6, 1], 3.0);
    let w = LossWeights::default();
    let (_, grad) = loss_and_grad(kind, &pred, &truth, &w, pooling).unwrap();
    let coords: Vec<usize> = (0..pred.data().len()).collect();
    let num = numeric_grad(
        |v| {
            let p = Tensor4::from_vec(2, 5, 6, 1, v.to_vec()).unwrap();
            loss_and_grad(kind, &p, &truth, &w, pooling).unwrap().0.total
        },
        pred.data(),
        &coords,
        1e-6,
    );
    rel_error(grad.data(), &num)
}

/// Relative errors of every primitive for one seed.
pub fn primitive_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed.wrapping_mul(7919).wrapping_add(1));
    let s = 24;
    let mut out = Vec::new();
    let x = random_tensor(&mut r, [2, 4, 5, 3], 1.0);
    out.push(("conv3x3", check_layer(&Conv2d::<f64>::he("c", 3, 3, 4, &mut r), &x, &mut r, s)));
    out.push(("conv1x1", check_layer(&Conv2d::<f64>::he("c", 1, 3, 2, &mut r), &x, &mut r, s)));
    out.push(("tconv", check_layer(&ConvTranspose3x3S2::<f64>::he("t", 3, 2, &mut r), &x, &mut r, s)));
    let mut bn = BatchNorm::<f64>::new("bn", 3);
    bn.gamma.value = (0..3).map(|_| r.random_range(0.5..1.5)).collect();
    bn.beta.value = (0..3).map(|_| r.random_range(-0.5..0.5)).collect();
    out.push(("batchnorm", check_layer(&bn, &x, &mut r, s)));
    out.push(("relu", check_layer(&Relu::new(), &x, &mut r, s)));
    let xp = random_tensor(&mut r, [2, 4, 6, 2], 1.0);
    out.push(("maxpool", check_layer(&MaxPool2::new(), &xp, &mut r, s)));
    out.push(("lstm", check_lstm(seed, s)));
    let sq = SqdLstm::<f64>::init("sqd", 3, SqdConfig { units: 3, filters: 2 }, &mut r);
    let xs = random_tensor(&mut r, [2, 3, 4, 3], 1.0);
    out.push(("sqd-lstm", check_layer(&sq, &xs, &mut r, s)));
    out.push(("loss-lc-joint", check_loss(seed, LossKind::Lc, Pooling::Joint)));
    out.push(("loss-lc-per-image", check_loss(seed, LossKind::Lc, Pooling::PerImage)));
    out.push(("loss-mse", check_loss(seed, LossKind::Mse, Pooling::Joint)));
    out
}

/// Central differences at `h` and `h / 10`. A coordinate whose two estimates
/// disagree has a ReLU or max-pool switch within `h` of it, where no finite
/// difference is meaningful; it comes back as `None`.
fn kink_aware_grad(mut f: impl FnMut(&[f64]) -> f64, v: &[f64], coords: &[usize], h: f64) -> Vec<Option<f64>> {
    let coarse = numeric_grad(&mut f, v, coords, h);
    let fine = numeric_grad(&mut f, v, coords, h / 10.0);
    coarse
        .into_iter()
        .zip(fine)
        .map(|(a, b)| ((a - b).abs() <= 1e-6 * (1.0 + a.abs())).then_some(a))
        .collect()
}

/// Two-stage network on 16×16 inputs, trained with the composite loss.
/// Returns the worst relative error over the input and every trainable
/// parameter. Panics if more than one sampled coordinate in twenty sits on a kink.
pub fn network_error(seed: u64, use_sqd: bool) -> f64 {
    let arch = ArchConfig {
        encoder_filters: vec![3, 4],
        decoder_filters: vec![4, 3],
        sqd_units: 2,
        sqd_filters: 3,
        use_sqd,
        ..ArchConfig::default()
    };
    let mut r = rng(seed.wrapping_add(100));
    let net = Network::<f64>::build(&arch, seed).unwrap();
    let x = random_tensor(&mut r, [2, 16, 16, 1], 3.0);
    let truth = random_tensor(&mut r, [2, 16, 16, 1], 5.0);
    let w = LossWeights::default();
    let objective = |n: &mut Network<f64>, input: &Tensor4<f64>| {
        let y = n.forward(input, Mode::Train).unwrap();
        loss_and_grad(LossKind::Lc, &y, &truth, &w, Pooling::Joint).unwrap().0.total
    };
    let mut analytic = net.clone();
    analytic.zero_grad();
    let y = analytic.forward(&x, Mode::Train).unwrap();
    let (_, g) = loss_and_grad(LossKind::Lc, &y, &truth, &w, Pooling::Joint).unwrap();
    let dx = analytic.backward(&g).unwrap();

    let samples = 12;
    let (mut worst, mut checked, mut kinks) = (0.0f64, 0, 0);
    let mut score = |ana: &[f64], num: Vec<Option<f64>>| {
        let (a, n): (Vec<f64>, Vec<f64>) = ana.iter().zip(num).filter_map(|(&a, n)| n.map(|n| (a, n))).unzip();
        kinks += ana.len() - a.len();
        checked += ana.len();
        worst = worst.max(rel_error(&a, &n));
    };
    let coords = sample_coords(&mut r, x.data().len(), samples);
    let num = kink_aware_grad(
        |v| objective(&mut net.clone(), &Tensor4::from_vec(2, 16, 16, 1, v.to_vec()).unwrap()),
        x.data(),
        &coords,
        1e-5,
    );
    let ana: Vec<f64> = coords.iter().map(|&i| dx.data()[i]).collect();
    score(&ana, num);
    for p in 0..net.params().len() {
        if !net.params()[p].trainable {
            continue;
        }
        let value = net.params()[p].value.clone();
        let grad = analytic.params()[p].grad.clone();
        let coords = sample_coords(&mut r, value.len(), samples);
        let num = kink_aware_grad(
            |v| {
                let mut n = net.clone();
                n.params_mut()[p].value.copy_from_slice(v);
                objective(&mut n, &x)
            },
            &value,
            &coords,
            1e-5,
        );
        let ana: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        score(&ana, num);
    }
    assert!(kinks * 20 <= checked, "seed {seed}: {kinks} of {checked} coordinates on kinks");
    worst
}
