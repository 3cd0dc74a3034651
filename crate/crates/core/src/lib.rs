pub mod attacks;
pub mod batch;
pub mod dbrosa;
pub mod error;
pub mod game;
pub mod linalg;
pub mod metrics;
pub mod robust_agg;
pub mod rng;
pub mod scenario;
pub mod svrg;
pub mod topology;

pub use error::{Error, Result};
