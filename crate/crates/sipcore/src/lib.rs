//! Link-level laboratory for multiuser MIMO-OFDM uplink with superimposed
//! pilots.
//!
//! The crate is `no_std` (with `alloc`) and covers the whole numerical chain:
//!
//! * [`grid`]: resource-grid indexing and orthogonal DFT pilots,
//! * [`channel`]: tapped-delay-line fading datasets, path gains and noise
//!   calibration,
//! * [`tx`]: pilot/data power split, QAM, superimposition and the channel,
//! * [`rx`]: least-squares estimation, pilot cancellation, MMSE detection,
//!   iterative estimation/detection and the traditional-pilot receiver,
//! * [`autodiff`]: a small reverse-mode tape used by the trainable receiver,
//! * [`nn`]: the path-gain conditioned U-Net channel estimator and the
//!   convolutional data detector,
//! * [`train`]: the end-to-end objective, Adam and gradient checking,
//! * [`eval`]: NMSE/SER metrics, PDP-region statistics and SNR sweeps.
//!
//! File formats, the command line and plotting live in the `siplab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod channel;
pub mod error;
pub mod eval;
pub mod grid;
pub mod linalg;
pub mod nn;
pub mod presets;
pub mod rx;
pub mod train;
pub mod tx;

pub use error::{Error, Result};

/// Complex baseband sample.
pub type C64 = num_complex::Complex64;
