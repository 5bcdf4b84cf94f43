//! File formats, configuration, reports and the experiment runner around
//! `fedfair-core`.

pub mod checkpoint;
pub mod config;
mod error;
pub mod idx;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
