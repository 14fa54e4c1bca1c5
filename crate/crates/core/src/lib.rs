pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod signal;
pub mod tensor;
pub mod train;
pub mod util;

pub use error::{Error, Result};
