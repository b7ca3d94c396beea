pub mod adaptive;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lqg;
pub mod lqr_eval;
pub mod random;
pub mod riccati;
pub mod rng;
pub mod stats;
pub mod transient;

pub use error::{Error, Result};
pub use linalg::Mat;
