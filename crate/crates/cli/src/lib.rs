//! File formats, experiment recipes, and the command-line pipelines built
//! on `bnsurrogate-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod experiment;
pub mod report;
pub mod timing;

pub use bnsurrogate_core as core;
