use alloc::string::String;
use alloc::vec::Vec;

use super::meta::{FovBox, StudyMeta};
use super::CurationError;

/// Longest pre→post gap that still counts as a retake (30 minutes).
pub const MAX_RETAKE_GAP_SECONDS: i64 = 30 * 60;
/// Field-of-view overlap below this discards a candidate pair.
pub const MIN_FOV_IOU: f64 = 0.7;

/// Intersection over union of two rectangles.
pub fn fov_iou(a: &FovBox, b: &FovBox) -> Result<f64, CurationError> {
    for bx in [a, b] {
        if !(bx.area() > 0.0) {
            let [x0, y0, x1, y1] = bx.corners();
            return Err(CurationError::DegenerateBox { x0, y0, x1, y1 });
        }
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Text screen over study descriptions; `true` keeps the study.
pub trait Screener {
    fn approve(&self, description: &str) -> bool;
}

/// Rejects descriptions naming functional or procedural exams.
#[derive(Clone, Debug)]
pub struct KeywordScreener {
    denylist: Vec<String>,
}

impl KeywordScreener {
    pub const DEFAULT_DENYLIST: [&'static str; 6] = [
        "line placement",
        "tube placement",
        "post procedure",
        "fluoroscopy",
        "inspiration/expiration",
        "decubitus",
    ];

    pub fn new(denylist: impl IntoIterator<Item = impl Into<String>>) -> KeywordScreener {
        KeywordScreener {
            denylist: denylist.into_iter().map(|s| s.into().to_lowercase()).collect(),
        }
    }
}

impl Default for KeywordScreener {
    fn default() -> KeywordScreener {
        KeywordScreener::new(KeywordScreener::DEFAULT_DENYLIST)
    }
}

impl Screener for KeywordScreener {
    fn approve(&self, description: &str) -> bool {
        let d = description.to_lowercase();
        !self.denylist.iter().any(|k| d.contains(k.as_str()))
    }
}

impl<F: Fn(&str) -> bool> Screener for F {
    fn approve(&self, description: &str) -> bool {
        self(description)
    }
}

/// A low-quality exam and its immediate re-acquisition.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetakePair {
    pub pre: StudyMeta,
    pub post: StudyMeta,
    pub gap_seconds: i64,
    pub fov_iou: f64,
}

impl RetakePair {
    /// Re-checks every pair invariant from the raw metadata.
    pub fn check(&self) -> Result<(), CurationError> {
        let fail = |reason| CurationError::InvalidPair {
            pre: self.pre.study_id,
            post: self.post.study_id,
            reason,
        };
        if self.pre.patient_id != self.post.patient_id {
            return Err(fail("different patients"));
        }
        if self.pre.acquired_at >= self.post.acquired_at {
            return Err(fail("pre is not earlier than post"));
        }
        let gap = self.post.acquired_at - self.pre.acquired_at;
        if gap != self.gap_seconds || gap > MAX_RETAKE_GAP_SECONDS {
            return Err(fail("gap exceeds window or disagrees with timestamps"));
        }
        if self.pre.projection != self.post.projection || !self.pre.projection.is_frontal() {
            return Err(fail("projection mismatch"));
        }
        let iou = fov_iou(&self.pre.fov_box, &self.post.fov_box)?;
        if iou < MIN_FOV_IOU || (iou - self.fov_iou).abs() > 1e-12 {
            return Err(fail("field-of-view overlap"));
        }
        Ok(())
    }
}

/// Pairs each exam with the earliest later exam of the same patient that
/// lies within the window, shares a frontal projection, overlaps enough and
/// passes the screener. Each study joins at most one pair.
pub fn extract_retake_pairs(studies: &[StudyMeta], screener: &dyn Screener) -> Vec<RetakePair> {
    let mut order: Vec<&StudyMeta> = studies.iter().collect();
    order.sort_by(|a, b| {
        (a.patient_id, a.acquired_at, a.study_id).cmp(&(b.patient_id, b.acquired_at, b.study_id))
    });
    let approved: Vec<bool> = order.iter().map(|s| screener.approve(&s.description)).collect();
    let mut used = alloc::vec![false; order.len()];
    let mut pairs = Vec::new();

    for i in 0..order.len() {
        let pre = order[i];
        if used[i] || !approved[i] || !pre.projection.is_frontal() {
            continue;
        }
        for j in i + 1..order.len() {
            let post = order[j];
            if post.patient_id != pre.patient_id {
                break;
            }
            let gap = post.acquired_at - pre.acquired_at;
            if gap > MAX_RETAKE_GAP_SECONDS {
                break;
            }
            if used[j] || !approved[j] || gap <= 0 || post.projection != pre.projection {
                continue;
            }
            let Ok(iou) = fov_iou(&pre.fov_box, &post.fov_box) else { continue };
            if iou < MIN_FOV_IOU {
                continue;
            }
            used[i] = true;
            used[j] = true;
            pairs.push(RetakePair {
                pre: pre.clone(),
                post: post.clone(),
                gap_seconds: gap,
                fov_iou: iou,
            });
            break;
        }
    }
    pairs
}

impl core::fmt::Display for RetakePair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} -> {}", self.pre.study_id, self.post.study_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::Projection;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> FovBox {
        FovBox::new(x0, y0, x1, y1).unwrap()
    }

    fn meta(study_id: u64, t: i64, projection: Projection, fov: FovBox, description: &str) -> StudyMeta {
        StudyMeta {
            patient_id: 1,
            study_id,
            acquired_at: t,
            projection,
            ei: 300.0,
            ei_t: 300.0,
            fov_box: fov,
            description: description.into(),
            image_ref: None,
        }
    }

    fn boxes_with_iou(iou: f64) -> (FovBox, FovBox) {
        // Same height, horizontal shift s: iou = (10-s)/(10+s).
        let s = 10.0 * (1.0 - iou) / (1.0 + iou);
        (bx(0.0, 0.0, 10.0, 10.0), bx(s, 0.0, 10.0 + s, 10.0))
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(fov_iou(&a, &a).unwrap(), 1.0);
        let b = bx(5.0, 0.0, 15.0, 10.0);
        assert!((fov_iou(&a, &b).unwrap() - 50.0 / 150.0).abs() < 1e-15);
        assert_eq!(fov_iou(&a, &bx(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(FovBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(FovBox::try_from([1.0, 2.0, 3.0, 1.0]).is_err());
    }

    #[test]
    fn pair_within_window() {
        let (a, b) = boxes_with_iou(0.9);
        let s = [
            meta(1, 1000, Projection::AP, a, "chest ap"),
            meta(2, 1000 + 25 * 60, Projection::AP, b, "chest ap"),
        ];
        let pairs = extract_retake_pairs(&s, &KeywordScreener::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].gap_seconds, 1500);
        pairs[0].check().unwrap();
    }

    #[test]
    fn no_pair_past_window() {
        let (a, b) = boxes_with_iou(0.9);
        let s = [
            meta(1, 0, Projection::AP, a, "chest"),
            meta(2, 35 * 60, Projection::AP, b, "chest"),
        ];
        assert!(extract_retake_pairs(&s, &KeywordScreener::default()).is_empty());
    }

    #[test]
    fn no_pair_with_low_overlap() {
        let (a, b) = boxes_with_iou(0.5);
        let s = [
            meta(1, 0, Projection::PA, a, "chest"),
            meta(2, 10 * 60, Projection::PA, b, "chest"),
        ];
        assert!(extract_retake_pairs(&s, &KeywordScreener::default()).is_empty());
    }

    #[test]
    fn screener_and_projection_filters() {
        let (a, b) = boxes_with_iou(0.95);
        let functional = [
            meta(1, 0, Projection::AP, a, "Chest AP post procedure line placement"),
            meta(2, 300, Projection::AP, b, "chest"),
        ];
        assert!(extract_retake_pairs(&functional, &KeywordScreener::default()).is_empty());
        let lateral = [
            meta(1, 0, Projection::Lateral, a, "chest"),
            meta(2, 300, Projection::Lateral, b, "chest"),
        ];
        assert!(extract_retake_pairs(&lateral, &KeywordScreener::default()).is_empty());
        let switched = [meta(1, 0, Projection::AP, a, "chest"), meta(2, 300, Projection::PA, b, "chest")];
        assert!(extract_retake_pairs(&switched, &KeywordScreener::default()).is_empty());
    }

    #[test]
    fn earliest_post_wins_and_studies_used_once() {
        let (a, b) = boxes_with_iou(0.9);
        let s = [
            meta(3, 900, Projection::AP, b, "chest"),
            meta(1, 0, Projection::AP, a, "chest"),
            meta(2, 600, Projection::AP, b, "chest"),
        ];
        let pairs = extract_retake_pairs(&s, &KeywordScreener::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].pre.study_id, pairs[0].post.study_id), (1, 2));
    }

    #[test]
    fn iou_symmetric_and_bounded() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(13, 0);
        for _ in 0..1000 {
            let mut r = || {
                let x0 = rng.random_range(-50.0..50.0);
                let y0 = rng.random_range(-50.0..50.0);
                let w = rng.random_range(0.1..60.0);
                let h = rng.random_range(0.1..60.0);
                bx(x0, y0, x0 + w, y0 + h)
            };
            let (a, b) = (r(), r());
            let ab = fov_iou(&a, &b).unwrap();
            assert_eq!(ab, fov_iou(&b, &a).unwrap());
            assert!((0.0..=1.0).contains(&ab));
        }
    }
}
