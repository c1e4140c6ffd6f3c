//! Multi-margin decorrelation learning for cross-domain (NIR/VIS) matching,
//! built on a small reverse-mode autodiff core.

pub mod checkpoint;
pub mod decorr;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Category, Error, Result};
pub use synth::Domain;
pub use tensor::{Graph, Matrix, Var};
