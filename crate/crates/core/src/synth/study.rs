use alloc::vec::Vec;

use rand::Rng;

use super::image::{GrayImage, IMAGE_PIXELS, IMAGE_SIDE};
use crate::domain::{FindingMask, Regime, NUM_FINDINGS};

/// Per-finding prevalence in the generator.
pub const FINDING_PREVALENCE: f64 = 0.4;

/// Nominal blob centers (x, y) of the four findings, away from the
/// top-left cue patch.
pub const FINDING_CENTERS: [(f64, f64); NUM_FINDINGS] = [(4.5, 11.0), (11.0, 4.5), (11.5, 11.5), (5.5, 5.5)];

const CENTER_JITTER: f64 = 1.0;
const RADIUS_RANGE: (f64, f64) = (1.6, 2.6);
const AMPLITUDE_RANGE: (f64, f64) = (0.35, 0.5);
const BACKGROUND_RANGE: (f64, f64) = (0.25, 0.45);
/// Per-pixel slope bound of the background ramp along each axis.
const BACKGROUND_SLOPE: f64 = 0.0012;
const EPOCH_RANGE: (i64, i64) = (1_500_000_000, 1_700_000_000);

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStudy {
    pub patient_id: u32,
    pub study_id: u32,
    pub acquired_at: i64,
    pub image: GrayImage,
    pub labels: FindingMask,
    pub regime: Regime,
}

impl SyntheticStudy {
    /// Pixels as f64 features for the classifier.
    pub fn features(&self) -> Vec<f64> {
        self.image.to_f64()
    }
}

/// Pixel indices covered by finding `k`'s nominal footprint (center ± max
/// jitter and radius); used by tests to bound contrast.
pub fn finding_region(k: usize) -> impl Iterator<Item = usize> {
    let (cx, cy) = FINDING_CENTERS[k];
    let reach = CENTER_JITTER + RADIUS_RANGE.1;
    (0..IMAGE_PIXELS).filter(move |&i| {
        let (x, y) = ((i % IMAGE_SIDE) as f64, (i / IMAGE_SIDE) as f64);
        (x - cx).abs() <= reach && (y - cy).abs() <= reach
    })
}

/// Draws a clean Standard-regime study: smooth background plus one soft
/// elliptical blob per present finding.
pub fn generate_clean_study<R: Rng + ?Sized>(rng: &mut R, patient_id: u32, study_id: u32) -> SyntheticStudy {
    let acquired_at = rng.random_range(EPOCH_RANGE.0..EPOCH_RANGE.1);
    let mut flags = [false; NUM_FINDINGS];
    for f in flags.iter_mut() {
        *f = rng.random_bool(FINDING_PREVALENCE);
    }
    let labels = FindingMask::from_flags(flags);

    let base = rng.random_range(BACKGROUND_RANGE.0..BACKGROUND_RANGE.1);
    let gx = rng.random_range(-BACKGROUND_SLOPE..BACKGROUND_SLOPE);
    let gy = rng.random_range(-BACKGROUND_SLOPE..BACKGROUND_SLOPE);
    let mut pixels = [0.0f64; IMAGE_PIXELS];
    let mid = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    for (i, p) in pixels.iter_mut().enumerate() {
        let (x, y) = ((i % IMAGE_SIDE) as f64, (i / IMAGE_SIDE) as f64);
        *p = base + gx * (x - mid) + gy * (y - mid);
    }

    for (k, &(cx, cy)) in FINDING_CENTERS.iter().enumerate() {
        if !flags[k] {
            continue;
        }
        let cx = cx + rng.random_range(-CENTER_JITTER..CENTER_JITTER);
        let cy = cy + rng.random_range(-CENTER_JITTER..CENTER_JITTER);
        let rx = rng.random_range(RADIUS_RANGE.0..RADIUS_RANGE.1);
        let ry = rng.random_range(RADIUS_RANGE.0..RADIUS_RANGE.1);
        let amp = rng.random_range(AMPLITUDE_RANGE.0..AMPLITUDE_RANGE.1);
        for (i, p) in pixels.iter_mut().enumerate() {
            let dx = ((i % IMAGE_SIDE) as f64 - cx) / rx;
            let dy = ((i / IMAGE_SIDE) as f64 - cy) / ry;
            let d2 = dx * dx + dy * dy;
            if d2 < 1.0 {
                *p += amp * (1.0 - d2);
            }
        }
    }

    let image = GrayImage::from_f64(IMAGE_SIDE, IMAGE_SIDE, &pixels.map(|v| v.clamp(0.0, 1.0)))
        .expect("fixed image size");
    SyntheticStudy {
        patient_id,
        study_id,
        acquired_at,
        image,
        labels,
        regime: Regime::Standard,
    }
}
