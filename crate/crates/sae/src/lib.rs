//! File formats, configuration and the command pipeline around `sae-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{Error, Result};
