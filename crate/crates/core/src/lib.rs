pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod geometry;
pub mod model;
pub mod params;
pub mod prompting;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
