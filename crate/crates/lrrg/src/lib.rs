//! Command line, file formats and remote grading for [`lrrg_core`].
//!
//! - [`dataset_file`]: the LRRG binary dataset format.
//! - [`param_file`]: flat binary parameter vectors.
//! - [`jsonl`], [`metrics_csv`], [`manifest`]: JSON-lines records, metrics
//!   tables and run manifests.
//! - [`config`]: layered `key=value` run configuration.
//! - [`remote`]: HTTP client for a chat-completions style quality grader.
//! - [`commands`]: `gen-data`, `curate`, `train`, `eval` and `probe`.

pub mod commands;
pub mod config;
pub mod dataset_file;
pub mod fixture;
pub mod fsutil;
pub mod images;
pub mod jsonl;
pub mod manifest;
pub mod metrics_csv;
pub mod param_file;
pub mod paths;
pub mod remote;

pub use config::{Benchmark, Layer, RunConfig};
