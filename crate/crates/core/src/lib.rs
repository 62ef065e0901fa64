//! Point-supervised temporal action localization with sub-action
//! prototypes and ordered alignment.

pub mod error;
pub mod eval;
pub mod infer;
pub mod io;
pub mod losses;
pub mod model;
pub mod opa;
pub mod spc;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
