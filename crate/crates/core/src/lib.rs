pub mod config;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod reprspace;
pub mod simgrad;
pub mod sweep;
pub mod synth;
pub mod teacher;
pub mod text;

pub use error::{Error, Result};
