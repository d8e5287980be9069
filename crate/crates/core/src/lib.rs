//! Estimation of the combined UE-panel-BS channel in a time-varying
//! IRS-assisted MIMO uplink.
//!
//! The library simulates the geometric channel and the training protocol,
//! recovers the combined channel per block by least squares, fits a
//! third-order rank-decomposed (CP) model across blocks by alternating least
//! squares, and benchmarks the result against the plain LS estimate and a
//! column-wise Khatri-Rao factorization baseline. The [`harness`] module
//! drives Monte-Carlo sweeps and writes CSV/SVG/manifest outputs; the
//! companion `irsce` binary exposes them as subcommands.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod pilot;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{CMat, CVec, CpFactors, Tensor3};
