//! Data stratification from acquisition metadata: retake pairs, exposure
//! deviation, no-reference quality proxies and Level 1–3 grading.

mod grader;
mod iqa;
mod meta;
mod retake;

pub use grader::{
    build_prompt, consistency_rate, grade_quality, parse_level, GradeRequest, GraderError, GraderVerdict,
    MockRuleGrader, MockThresholds, QualityGrader, QualityLevel, VerdictSource, ANSWER_FORMAT_LINE,
};
pub use iqa::{deviation_index, iqa_proxies, IqaScores, ImageQuality};
pub use meta::{FovBox, Projection, StudyMeta};
pub use retake::{extract_retake_pairs, fov_iou, KeywordScreener, RetakePair, Screener, MAX_RETAKE_GAP_SECONDS, MIN_FOV_IOU};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurationError {
    #[error("exposure index must be positive, got EI={ei}, EI_T={ei_t}")]
    ExposureDomain { ei: f64, ei_t: f64 },
    #[error("degenerate field-of-view box ({x0}, {y0}, {x1}, {y1})")]
    DegenerateBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("consistency rate needs at least one pair")]
    NoPairs,
    #[error("retake pair {pre} -> {post} violates: {reason}")]
    InvalidPair { pre: u64, post: u64, reason: &'static str },
}
