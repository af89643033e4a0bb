pub mod attention;
pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod tlstm;
pub mod trainer;

pub use error::{Error, Result};
