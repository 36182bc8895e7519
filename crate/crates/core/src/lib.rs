//! Quality-robust learning by dual-loop (bi-level) optimization.
//!
//! This crate is `no_std` and only needs `alloc`. It carries every pure
//! algorithm of the system:
//!
//! - [`autodiff`]: a small define-by-run reverse-mode tape over rank ≤ 2
//!   tensors, plus flat parameter-vector algebra.
//! - [`synth`]: the synthetic multi-regime corpus (clean studies,
//!   degradations, spurious cues) and leakage-proof patient splits.
//! - [`curation`]: retake-pair extraction, exposure deviation index,
//!   statistical quality proxies and criteria-guided Level 1–3 grading.
//! - [`dualloop`]: the bi-level trainer with regime rotation, its four
//!   outer-update modes and gradient-coherence diagnostics.
//! - [`metrics`]: template report rendering, BLEU, ROUGE-L and label
//!   precision/recall/F1.
//!
//! IO, file formats, HTTP and the command line live in the `lrrg` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod autodiff;
pub mod curation;
pub mod domain;
pub mod dualloop;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use domain::{FindingMask, Regime, Split, NUM_FINDINGS};
