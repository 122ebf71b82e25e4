//! File formats, parallel search and the command-line front end for `vlme-core`.

pub mod artifact;
pub mod cli;
pub mod error;
pub mod format;
pub mod manifest;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
