//! File formats, configuration and the experiment harness around `cfbanzhaf-core`.

pub mod complexity;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod margin;
pub mod output;

pub use cfbanzhaf_core as core;
pub use error::{HarnessError, Result};
