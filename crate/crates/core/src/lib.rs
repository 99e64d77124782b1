pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod losses;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
