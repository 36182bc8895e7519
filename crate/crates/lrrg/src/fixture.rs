//! Synthetic retake-curation fixture with a known answer key.
//!
//! Each planted patient has a Severe-degraded frontal exam and, within the
//! retake window, a clean re-acquisition with high field-of-view overlap;
//! some also carry a lateral companion and a follow-up days later.
//! Distractor patients violate exactly one pairing rule each.

use lrrg_core::curation::{FovBox, Projection, StudyMeta};
use lrrg_core::rng::seeded;
use lrrg_core::Regime;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::images::synth_ref;

pub const FIXTURE_SEED: u64 = 20_240_601;
pub const PLANTED_PAIRS: usize = 100;
pub const KEY_HEADER: &str = "pre_study_id,post_study_id";

#[derive(Clone, Debug, PartialEq)]
pub struct RetakeFixture {
    /// Shuffled metadata records.
    pub studies: Vec<StudyMeta>,
    /// Planted `(pre, post)` study ids, sorted.
    pub key: Vec<(u64, u64)>,
}

/// `b` shifted horizontally so that the two boxes have IoU `iou`.
fn shifted(b: &FovBox, iou: f64) -> FovBox {
    let [x0, y0, x1, y1] = b.corners();
    let s = (x1 - x0) * (1.0 - iou) / (1.0 + iou);
    FovBox::new(x0 + s, y0, x1 + s, y1).unwrap()
}

struct Builder<R> {
    rng: R,
    next_study: u64,
    next_patient: u64,
    next_image: u64,
    studies: Vec<StudyMeta>,
}

impl<R: Rng> Builder<R> {
    fn patient(&mut self) -> u64 {
        self.next_patient += 1 + self.rng.random_range(0..5);
        self.next_patient
    }

    fn image(&mut self) -> u64 {
        self.next_image += 1;
        self.next_image
    }

    fn fov(&mut self) -> FovBox {
        let x0 = self.rng.random_range(0.0..40.0);
        let y0 = self.rng.random_range(0.0..40.0);
        let w = self.rng.random_range(300.0..380.0);
        let h = self.rng.random_range(320.0..420.0);
        FovBox::new(x0, y0, x0 + w, y0 + h).unwrap()
    }

    fn study(
        &mut self,
        patient_id: u64,
        acquired_at: i64,
        projection: Projection,
        fov_box: FovBox,
        description: &str,
        image_ref: Option<String>,
    ) -> u64 {
        self.next_study += 1 + self.rng.random_range(0..3);
        let ei_t = self.rng.random_range(200.0..500.0);
        let ei = ei_t * 10f64.powf(self.rng.random_range(-0.1..0.1));
        self.studies.push(StudyMeta {
            patient_id,
            study_id: self.next_study,
            acquired_at,
            projection,
            ei,
            ei_t,
            fov_box,
            description: description.into(),
            image_ref,
        });
        self.next_study
    }

    fn frontal(&mut self) -> (Projection, &'static str) {
        if self.rng.random_bool(0.5) {
            (Projection::AP, "CHEST (PORTABLE AP)")
        } else {
            (Projection::PA, "CHEST (PA AND LAT)")
        }
    }

    fn epoch(&mut self) -> i64 {
        self.rng.random_range(1_500_000_000..1_700_000_000)
    }
}

pub fn retake_fixture(seed: u64) -> RetakeFixture {
    let mut b = Builder {
        rng: seeded(seed, 0),
        next_study: 50_000_000,
        next_patient: 10_000_000,
        next_image: 0,
        studies: Vec::new(),
    };
    let mut key = Vec::with_capacity(PLANTED_PAIRS);

    for i in 0..PLANTED_PAIRS {
        let p = b.patient();
        let t = b.epoch();
        let (proj, desc) = b.frontal();
        let fov = b.fov();
        let iou = b.rng.random_range(0.75..1.0);
        let post_fov = shifted(&fov, iou);
        let gap = b.rng.random_range(60..=1740);
        let n = b.image();
        let pre = b.study(p, t, proj, fov, desc, Some(synth_ref(Regime::Severe, n)));
        if i % 4 == 0 {
            let lat = b.fov();
            b.study(p, t + gap / 2, Projection::Lateral, lat, "CHEST (PA AND LAT)", None);
        }
        let post = b.study(p, t + gap, proj, post_fov, desc, Some(synth_ref(Regime::Standard, n)));
        if i % 5 == 0 {
            let later = t + b.rng.random_range(2..30) * 86_400;
            let f = b.fov();
            let m = b.image();
            b.study(p, later, proj, f, desc, Some(synth_ref(Regime::Standard, m)));
        }
        key.push((pre, post));
    }

    for i in 0..80 {
        let p = b.patient();
        let t = b.epoch();
        let (proj, desc) = b.frontal();
        let fov = b.fov();
        let close = shifted(&fov, 0.9);
        let n = b.image();
        let img = |r| Some(synth_ref(r, n));
        match i % 8 {
            // outside the window
            0 => {
                let gap = b.rng.random_range(1801..3600);
                b.study(p, t, proj, fov, desc, img(Regime::Severe));
                b.study(p, t + gap, proj, close, desc, img(Regime::Standard));
            }
            // low field-of-view overlap
            1 => {
                let iou = b.rng.random_range(0.3..0.65);
                let far = shifted(&fov, iou);
                b.study(p, t, proj, fov, desc, img(Regime::Severe));
                b.study(p, t + 600, proj, far, desc, img(Regime::Standard));
            }
            // lateral only
            2 => {
                b.study(p, t, Projection::Lateral, fov, "CHEST LATERAL", None);
                b.study(p, t + 300, Projection::Lateral, close, "CHEST LATERAL", None);
            }
            // projection switch
            3 => {
                b.study(p, t, Projection::AP, fov, "CHEST (PORTABLE AP)", img(Regime::Severe));
                b.study(p, t + 400, Projection::PA, close, "CHEST (PA AND LAT)", img(Regime::Standard));
            }
            // functional exam
            4 => {
                b.study(p, t, proj, fov, "CHEST PORTABLE LINE PLACEMENT", img(Regime::Severe));
                b.study(p, t + 500, proj, close, "CHEST PORTABLE LINE PLACEMENT", img(Regime::Standard));
            }
            // two different patients scanned back to back
            5 => {
                let q = b.patient();
                b.study(p, t, proj, fov, desc, img(Regime::Severe));
                b.study(q, t + 120, proj, close, desc, img(Regime::Standard));
            }
            // other projection
            6 => {
                b.study(p, t, Projection::Other, fov, "CHEST", None);
                b.study(p, t + 200, Projection::Other, close, "CHEST", None);
            }
            // single exam
            _ => {
                b.study(p, t, proj, fov, desc, img(Regime::Standard));
            }
        }
    }

    let mut studies = b.studies;
    studies.shuffle(&mut b.rng);
    key.sort_unstable();
    RetakeFixture { studies, key }
}

pub fn key_csv(key: &[(u64, u64)]) -> String {
    let mut s = String::from(KEY_HEADER);
    s.push('\n');
    for (a, b) in key {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

pub fn parse_key_csv(text: &str) -> Result<Vec<(u64, u64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(KEY_HEADER) {
        return Err("missing key header".into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (a, b) = l.split_once(',').ok_or(format!("key line {}: expected two ids", i + 2))?;
            let parse = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("key line {}: {e}", i + 2));
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lrrg_core::curation::{extract_retake_pairs, KeywordScreener};

    #[test]
    fn fixture_is_deterministic_and_recovers_key() {
        let f = retake_fixture(FIXTURE_SEED);
        assert_eq!(f, retake_fixture(FIXTURE_SEED));
        assert_eq!(f.key.len(), PLANTED_PAIRS);
        let mut found: Vec<_> = extract_retake_pairs(&f.studies, &KeywordScreener::default())
            .iter()
            .map(|p| (p.pre.study_id, p.post.study_id))
            .collect();
        found.sort_unstable();
        assert_eq!(found, f.key);
    }

    #[test]
    fn study_ids_are_unique() {
        let f = retake_fixture(3);
        let mut ids: Vec<_> = f.studies.iter().map(|s| s.study_id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), f.studies.len());
    }

    #[test]
    fn key_csv_round_trips() {
        let key = vec![(1, 2), (30, 44)];
        assert_eq!(parse_key_csv(&key_csv(&key)).unwrap(), key);
        assert!(parse_key_csv("a,b\n1,2").is_err());
        assert!(parse_key_csv(&format!("{KEY_HEADER}\n1;2")).is_err());
    }
}
