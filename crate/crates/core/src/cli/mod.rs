//! Batch front end: configuration, validation, caching and output.

pub mod cache;
pub mod config;
pub mod presets;
pub mod run;

pub use cache::DiskCache;
pub use config::{validate, RunConfig, Validated};
pub use run::{run, Manifest};
