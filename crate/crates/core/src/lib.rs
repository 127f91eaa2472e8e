//! Simulation and estimation toolkit for doubly-dispersive (time-varying
//! multipath) channels.
//!
//! The crate implements two delay-Doppler waveform chains end to end:
//!
//! - **OTFS**, which places a `K x L` symbol grid on the delay-Doppler plane
//!   and maps it to time through an ISFFT followed by a pulse-shaped
//!   Heisenberg transform;
//! - **AFDM**, which multiplexes a length-`N` vector onto discrete chirps via
//!   the inverse discrete affine Fourier transform.
//!
//! Around them sit a sampled channel model ([`channel`]), LMMSE detection for
//! BER benchmarking ([`detection`]), grid-search maximum-likelihood sensing
//! with successive cancellation ([`sensing`]) and the experiment harness with
//! the waveform comparison analyses ([`harness`]).
//!
//! All complex data is `Complex<f64>` ([`C64`]); dense matrices are
//! column-major [`nalgebra::DMatrix`] values ([`CMatrix`]), so a matrix's
//! storage slice is exactly its column-major vectorization.

pub mod afdm;
pub mod channel;
pub mod detection;
pub mod error;
pub mod harness;
pub mod heatmap;
pub mod otfs;
pub mod sensing;
pub mod transforms;
pub mod waveform;

pub use error::{DdError, Result};
pub use waveform::WaveformConfig;

/// Double-precision complex sample.
pub type C64 = num_complex::Complex<f64>;

/// Dense complex matrix (column-major storage).
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Largest frame length for which dense `N x N` matrices are materialized.
pub const MAX_DENSE_N: usize = 4096;
