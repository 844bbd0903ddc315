pub mod bounds;
pub mod channel;
pub mod circular;
pub mod codec;
pub mod error;
pub mod fg_engine;
pub mod fit;
pub mod framing;
pub mod harness;
pub mod pf_estimator;
pub mod rng;
pub mod rw_estimator;

pub use error::{Error, Result};
