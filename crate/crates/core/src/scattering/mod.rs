//! Windowed two-layer wavelet scattering transform on periodic images.
//!
//! Filters live in the Fourier domain ([`FilterBank`]); the transform
//! ([`scatter2d`]) cascades band-pass convolution and pointwise modulus, then
//! averages with the Gaussian low-pass and subsamples by `2^J`. Nothing here
//! participates in gradient computation.

mod fft;
mod filters;
mod transform;

pub use fft::Fft2d;
pub use filters::{FilterBank, FrameBounds, MorletParams};
pub use transform::{path_count, paths, scatter2d, scatter_multichannel, Path, ScatteringCoeffs};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error("image size {height}x{width} is not divisible by 2^J = {factor}")]
    NotDivisible { height: usize, width: usize, factor: usize },
    #[error("invalid scattering parameters: {0}")]
    InvalidParams(String),
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
}
