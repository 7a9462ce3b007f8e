pub mod debias;
pub mod diagnostics;
pub mod error;
pub mod inlp;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Matrix, OrthonormalBasis};
