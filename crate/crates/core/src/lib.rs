//! Wavelet-domain convolution and entropy coding primitives.
//!
//! This crate holds the pure algorithmic half of the codec: lifting wavelet
//! transforms, a small deterministic inference engine (convolutions, GDN,
//! residual blocks), the WeConv/IWeConv composite layers and the graphs built
//! from them, Gaussian and factorized entropy models over a 16-bit range
//! coder, and the two-step (LF then HF) channel-sliced entropy model.
//!
//! The crate is `no_std` and only needs `alloc`. The `parallel` feature pulls
//! in `std` and rayon and spreads convolutions over output channels; results
//! are bit-identical with and without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classical;
pub mod entropy;
mod error;
pub mod graph;
pub mod nn;
pub mod tensor;
pub mod wavelet;
pub mod wecharm;
pub mod weconv;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use wavelet::{SubbandSet, WaveletKind};
