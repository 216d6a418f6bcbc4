pub mod control;
pub mod env;
pub mod error;
pub mod harness;
pub mod memory;
pub mod nn;
pub mod policy;
pub mod text;

pub use error::{Error, Result};
