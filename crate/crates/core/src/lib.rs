//! Truncated polynomial expansion (TPE) detection for uplink massive MIMO.
//!
//! The crate is `no_std` (with `alloc`) and holds the numerical core:
//!
//! - [`model`]: channel sampling, the complex to real block map, Gray-coded QAM
//!   and noisy transmission.
//! - [`detect`]: exact ZF/MMSE filters, normalization factors, TPE coefficient
//!   synthesis, matrix-free TPE detection and complex-multiplication counts.
//! - [`train`]: the Frobenius matrix-matching loss, its analytic gradient, Adam
//!   with per-epoch exponential decay and the closed-form least-squares fit.
//! - [`sim`]: Monte-Carlo bit-error-rate trials and SNR sweeps.
//!
//! IO, file formats, thread pools and the command-line tool live in the `tpe`
//! crate.
#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod detect;
pub mod error;
pub mod model;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
