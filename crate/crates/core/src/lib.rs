pub mod base;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod multifractal;
pub mod output;
pub mod scenarios;
pub mod symbolic;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};
