//! k-sparse autoencoders, iterative thresholding with inversion (ITI), and
//! coherence-based recovery diagnostics.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod ksae;
pub mod recovery;
pub mod datasets;
pub mod format;
pub mod heads;
