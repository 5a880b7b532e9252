pub mod augmentation;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
