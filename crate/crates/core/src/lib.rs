//! Transferable neural fields.
//!
//! Coordinate networks (SIREN, multiresolution hash grids, K-Planes) split
//! into a shared encoder and per-signal decoders, trained with a small tape
//! autodiff engine. An encoder pretrained on related signals warm-starts the
//! fit of an unseen one.

pub mod autodiff;
pub mod error;
pub mod fields;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod transfer;

pub use autodiff::{DType, DenseArray, Real, Tape, Var};
pub use error::{Error, Result};
