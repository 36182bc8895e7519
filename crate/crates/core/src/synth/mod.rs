//! Synthetic multi-regime corpus with known ground truth.
//!
//! Clean studies are 16×16 images with up to four soft "finding" blobs.
//! Mild and Severe regimes add blur, noise and exposure shifts, plus a
//! top-left cue patch whose correlation with finding 0 flips sign between
//! the two degraded regimes. Splits are patient-disjoint.

mod degrade;
mod image;
mod split;
mod study;

pub use degrade::{
    degrade, inject_spurious_cue, CueSign, DegradationGrade, DegradationSpec, SpuriousCue, CUE_PATCH,
    DEFAULT_CUE_INTENSITY,
};
pub use image::{box_blur, GrayImage, IMAGE_PIXELS, IMAGE_SIDE};
pub use split::{
    build_regime_datasets, plan_split, synthesize, DatasetConfig, PlannedStudy, RegimeCorpus, RegimeCounts,
    RegimeDataset, SplitManifest, SplitPlan,
};
pub use study::{finding_region, generate_clean_study, SyntheticStudy, FINDING_CENTERS, FINDING_PREVALENCE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("cannot draw {requested} {what} studies, only {available} eligible")]
    Capacity {
        what: &'static str,
        requested: usize,
        available: usize,
    },
}
