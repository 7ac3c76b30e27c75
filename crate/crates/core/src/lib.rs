pub mod cli;
pub mod diagnose;
pub mod dist;
pub mod diurnal;
pub mod dynamics;
pub mod error;
pub mod estimate;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};
