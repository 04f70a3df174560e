pub mod cmf;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod slab;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
