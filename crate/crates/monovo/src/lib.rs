//! File formats, sequence loading and the `monovo` command-line tool on top of
//! [`monovo_core`].

pub mod cli;
pub mod dataset;
pub mod error;
pub mod formats;

pub use error::{Error, Result};
