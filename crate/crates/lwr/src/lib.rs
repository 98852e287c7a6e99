//! File formats, the binary tensor container, the scoring service, the
//! serving benchmark and the file-based pipeline around `lwr-core`.

pub mod bench;
pub mod cli;
pub mod container;
pub mod error;
pub mod config;
pub mod formats;
pub mod server;
pub mod workflow;

pub use error::{LwrError, Result};
