pub mod attention;
pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod tensor;
pub mod vq;

pub use error::{Error, Result};
