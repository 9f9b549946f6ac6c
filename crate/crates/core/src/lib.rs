pub mod classify;
pub mod cli;
pub mod cocycle;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod openset;
pub mod phi;
pub mod quad;
pub mod toeplitz;

pub use error::{Error, Result};
