//! Feedback-free ("data-driven") MIMO transmission-parameter selection.
//!
//! The crate learns a mapping from user location to a precoder, rank and CQI
//! using historical channel data, and evaluates it against closed-loop
//! spatial multiplexing on an effective-SINR link abstraction.
//!
//! Module map:
//!
//! - [`channel`]: synthetic multipath channel tensor `H[t][k][q]`, its binary
//!   file format and the interleaved train/test grid split.
//! - [`codebook`]: Type-I single-panel DFT codebook.
//! - [`linkphy`]: MMSE equalization, per-layer SINR, MIESM, BLER, CQI and
//!   throughput.
//! - [`selection`]: per-slot optimal codebook (CLSM) and SVD precoders.
//! - [`statfix`]: statistics-based fixing of codebook parameters and
//!   nearest-neighbour spatial inference.
//! - [`vae`]: per-rank variational autoencoders over SVD precoders, rank
//!   fixing and representative-latent selection.
//! - [`spatial`]: Gaussian-process regression of latent means, Sibson
//!   natural-neighbour CQI interpolation and the conservative RI rule.
//! - [`harness`]: experiment configuration, pipelines, metrics and reports.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod linkphy;
pub mod selection;
pub mod spatial;
pub mod statfix;
pub mod vae;

pub use error::{Error, Result};

/// Double-precision complex scalar used throughout the numerical code.
pub type C64 = num_complex::Complex64;
