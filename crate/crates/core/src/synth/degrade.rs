use rand::Rng;
use rand_distr::StandardNormal;

use super::image::{box_blur, GrayImage};
use super::study::SyntheticStudy;
use crate::domain::Regime;

/// Side of the square cue patch in the top-left corner.
pub const CUE_PATCH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CueSign {
    /// Bright patch iff finding 0 is present.
    Positive,
    /// Dark patch iff finding 0 is present.
    Negative,
}

impl CueSign {
    pub fn as_i8(self) -> i8 {
        match self {
            CueSign::Positive => 1,
            CueSign::Negative => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<CueSign> {
        match v {
            1 => Some(CueSign::Positive),
            -1 => Some(CueSign::Negative),
            _ => None,
        }
    }
}

/// Corner-patch shortcut correlated with finding 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpuriousCue {
    /// Bright level; the dark level is `1 − intensity`.
    pub intensity: f64,
    pub sign: CueSign,
}

/// Concrete corruption applied to one study.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DegradationSpec {
    pub noise_sigma: f64,
    pub blur_passes: u32,
    pub exposure_shift: f64,
    pub spurious_cue: Option<SpuriousCue>,
}

/// Regime-level corruption recipe; each study draws its own exposure shift
/// uniformly from `±shift_range`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DegradationGrade {
    pub noise_sigma: f64,
    pub blur_passes: u32,
    pub shift_range: f64,
    pub cue: Option<SpuriousCue>,
}

pub const DEFAULT_CUE_INTENSITY: f64 = 0.95;

impl DegradationGrade {
    /// Clean acquisition (Standard regime).
    pub fn none() -> DegradationGrade {
        DegradationGrade::default()
    }

    pub fn default_for(regime: Regime) -> DegradationGrade {
        match regime {
            Regime::Standard => DegradationGrade::none(),
            Regime::Mild => DegradationGrade {
                noise_sigma: 0.05,
                blur_passes: 1,
                shift_range: 0.1,
                cue: Some(SpuriousCue {
                    intensity: DEFAULT_CUE_INTENSITY,
                    sign: CueSign::Positive,
                }),
            },
            Regime::Severe => DegradationGrade {
                noise_sigma: 0.15,
                blur_passes: 2,
                shift_range: 0.25,
                cue: Some(SpuriousCue {
                    intensity: DEFAULT_CUE_INTENSITY,
                    sign: CueSign::Negative,
                }),
            },
        }
    }

    pub fn sample_spec<R: Rng + ?Sized>(&self, rng: &mut R) -> DegradationSpec {
        let exposure_shift = if self.shift_range > 0.0 {
            rng.random_range(-self.shift_range..self.shift_range)
        } else {
            0.0
        };
        DegradationSpec {
            noise_sigma: self.noise_sigma,
            blur_passes: self.blur_passes,
            exposure_shift,
            spurious_cue: self.cue,
        }
    }
}

/// Blur, then additive Gaussian noise, then exposure shift, then the
/// optional cue; clamps to [0,1] and retags the study with `regime`.
/// Labels are never touched.
pub fn degrade<R: Rng + ?Sized>(
    study: &SyntheticStudy,
    spec: &DegradationSpec,
    regime: Regime,
    rng: &mut R,
) -> SyntheticStudy {
    assert!(spec.noise_sigma >= 0.0, "noise sigma must be nonnegative");
    let (w, h) = (study.image.width(), study.image.height());
    let mut px = study.image.to_f64();
    for _ in 0..spec.blur_passes {
        px = box_blur(&px, w, h);
    }
    if spec.noise_sigma > 0.0 {
        for p in px.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p += spec.noise_sigma * z;
        }
    }
    if spec.exposure_shift != 0.0 {
        for p in px.iter_mut() {
            *p += spec.exposure_shift;
        }
    }
    for p in px.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    let mut out = SyntheticStudy {
        image: GrayImage::from_f64(w, h, &px).expect("same dimensions"),
        regime,
        ..study.clone()
    };
    if let Some(cue) = spec.spurious_cue {
        out = inject_spurious_cue(&out, &cue);
    }
    out
}

/// Paints the top-left patch bright or dark according to finding 0 and the
/// cue sign.
pub fn inject_spurious_cue(study: &SyntheticStudy, cue: &SpuriousCue) -> SyntheticStudy {
    let positive = study.labels.has(0) == (cue.sign == CueSign::Positive);
    let level = if positive { cue.intensity } else { 1.0 - cue.intensity };
    let level = level.clamp(0.0, 1.0);
    let (w, h) = (study.image.width(), study.image.height());
    let mut px = study.image.to_f64();
    for y in 0..CUE_PATCH.min(h) {
        for x in 0..CUE_PATCH.min(w) {
            px[y * w + x] = level;
        }
    }
    SyntheticStudy {
        image: GrayImage::from_f64(w, h, &px).expect("same dimensions"),
        ..study.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FindingMask;
    use crate::rng::seeded;
    use crate::synth::image::{IMAGE_PIXELS, IMAGE_SIDE};
    use crate::synth::study::generate_clean_study;

    fn constant_study(v: f32) -> SyntheticStudy {
        SyntheticStudy {
            patient_id: 1,
            study_id: 1,
            acquired_at: 0,
            image: GrayImage::filled(IMAGE_SIDE, IMAGE_SIDE, v),
            labels: FindingMask::new(0b0001).unwrap(),
            regime: Regime::Standard,
        }
    }

    #[test]
    fn zero_spec_is_identity() {
        let s = generate_clean_study(&mut seeded(3, 3), 1, 2);
        let d = degrade(&s, &DegradationSpec::default(), Regime::Standard, &mut seeded(0, 0));
        assert_eq!(d, s);
    }

    #[test]
    fn noise_std_on_constant_image() {
        let s = constant_study(0.5);
        let spec = DegradationSpec {
            noise_sigma: 0.1,
            ..Default::default()
        };
        let d = degrade(&s, &spec, Regime::Mild, &mut seeded(42, 0));
        let px = d.image.to_f64();
        let mean = px.iter().sum::<f64>() / IMAGE_PIXELS as f64;
        let var = px.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (IMAGE_PIXELS as f64 - 1.0);
        let sd = libm::sqrt(var);
        assert!((0.08..=0.12).contains(&sd), "sd {sd}");
        assert_eq!(d.regime, Regime::Mild);
    }

    #[test]
    fn exposure_clamps_to_white() {
        let s = constant_study(0.5);
        let spec = DegradationSpec {
            exposure_shift: 0.6,
            ..Default::default()
        };
        let d = degrade(&s, &spec, Regime::Severe, &mut seeded(0, 0));
        assert!(d.image.pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn cue_levels_follow_sign() {
        let s = constant_study(0.3);
        let pos = inject_spurious_cue(
            &s,
            &SpuriousCue {
                intensity: 0.95,
                sign: CueSign::Positive,
            },
        );
        let neg = inject_spurious_cue(
            &s,
            &SpuriousCue {
                intensity: 0.95,
                sign: CueSign::Negative,
            },
        );
        for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(pos.image.get(x, y), 0.95f32);
            assert!((neg.image.get(x, y) - 0.05).abs() < 1e-7);
        }
        assert_eq!(pos.image.get(2, 2), 0.3);
        assert_eq!(pos.labels, s.labels);
    }

    #[test]
    fn mse_nondecreasing_in_sigma() {
        let s = generate_clean_study(&mut seeded(9, 9), 1, 1);
        let clean = s.image.to_f64();
        let mut last = 0.0;
        for step in 0..=20 {
            let sigma = step as f64 * 0.02;
            let spec = DegradationSpec {
                noise_sigma: sigma,
                ..Default::default()
            };
            let d = degrade(&s, &spec, Regime::Mild, &mut seeded(77, 0));
            let mse = d
                .image
                .to_f64()
                .iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / IMAGE_PIXELS as f64;
            assert!(mse >= last, "sigma {sigma}: {mse} < {last}");
            last = mse;
        }
    }

    #[test]
    fn degradation_preserves_labels() {
        let mut rng = seeded(4, 4);
        for i in 0..100 {
            let s = generate_clean_study(&mut rng, i, i);
            let spec = DegradationGrade::default_for(Regime::Severe).sample_spec(&mut rng);
            let d = degrade(&s, &spec, Regime::Severe, &mut rng);
            assert_eq!(d.labels, s.labels);
            assert_eq!(d.regime, Regime::Severe);
        }
    }
}
