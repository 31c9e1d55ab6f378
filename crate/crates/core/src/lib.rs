//! Phase unwrapping toolkit.
//!
//! The crate bundles everything needed to study learned 2-D phase unwrapping
//! at desk scale:
//!
//! * [`phase`]: wrapping, 1-D Itoh unwrapping, SNR-controlled noise, NRMSE.
//! * [`datagen`]: synthetic Gaussian-mixture phase surfaces and on-disk datasets.
//! * [`nn`]: the handful of differentiable layers the network needs
//!   (convolution, transposed convolution, batch norm, pooling, LSTM, Adam).
//! * [`sqd`]: the spatial quad-directional LSTM block.
//! * [`network`]: encoder / SQD-LSTM / decoder regression network.
//! * [`losses`]: variance-of-error, total-variation-of-error, composite and MSE losses.
//! * [`training`]: training loop, evaluation and metric reports.
//! * [`qgpu`]: quality-guided path-following unwrapper (classical baseline).
//! * [`cli`]: the commands behind the `sqd-unwrap` binary.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod losses;
pub mod network;
pub mod nn;
pub mod phase;
pub mod qgpu;
pub mod sqd;
pub mod training;

pub use error::{Error, Result};
pub use phase::{PhaseImage, WrappedImage};
