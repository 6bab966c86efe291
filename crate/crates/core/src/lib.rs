pub mod analysis;
pub mod channel_math;
pub mod config;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
