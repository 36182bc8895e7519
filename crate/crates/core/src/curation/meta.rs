use alloc::string::String;

use super::CurationError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Projection {
    AP,
    PA,
    Lateral,
    Other,
}

impl Projection {
    pub fn is_frontal(self) -> bool {
        matches!(self, Projection::AP | Projection::PA)
    }
}

/// Axis-aligned field-of-view rectangle in detector coordinates.
/// Serialized as `[x0, y0, x1, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "[f64; 4]", into = "[f64; 4]"))]
pub struct FovBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl FovBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<FovBox, CurationError> {
        let finite = x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite();
        if !finite || x0 >= x1 || y0 >= y1 {
            return Err(CurationError::DegenerateBox { x0, y0, x1, y1 });
        }
        Ok(FovBox { x0, y0, x1, y1 })
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn intersection_area(&self, other: &FovBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl TryFrom<[f64; 4]> for FovBox {
    type Error = CurationError;

    fn try_from(v: [f64; 4]) -> Result<FovBox, CurationError> {
        FovBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<FovBox> for [f64; 4] {
    fn from(b: FovBox) -> [f64; 4] {
        b.corners()
    }
}

/// Acquisition metadata of one exam.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyMeta {
    pub patient_id: u64,
    pub study_id: u64,
    /// Seconds since the epoch.
    pub acquired_at: i64,
    pub projection: Projection,
    /// Achieved exposure index.
    pub ei: f64,
    /// Target exposure index.
    pub ei_t: f64,
    pub fov_box: FovBox,
    pub description: String,
    pub image_ref: Option<String>,
}

impl StudyMeta {
    pub fn validate(&self) -> Result<(), CurationError> {
        if !(self.ei > 0.0 && self.ei_t > 0.0) {
            return Err(CurationError::ExposureDomain {
                ei: self.ei,
                ei_t: self.ei_t,
            });
        }
        Ok(())
    }
}
