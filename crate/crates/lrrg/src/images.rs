//! Resolution of `image_ref` handles to pixels.
//!
//! `synth:<regime>:<n>` names synthetic acquisition `n`: the clean study is
//! drawn from the study stream of seed `n`, and `mild`/`severe` apply that
//! regime's default degradation. The same `n` therefore shows the same
//! anatomy in every regime.

use lrrg_core::rng::{seeded, streams};
use lrrg_core::synth::{degrade, generate_clean_study, DegradationGrade, GrayImage};
use lrrg_core::Regime;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unresolvable image_ref `{0}`")]
pub struct ImageRefError(pub String);

pub fn synth_ref(regime: Regime, n: u64) -> String {
    format!("synth:{}:{n}", regime.short_name())
}

pub fn resolve_image_ref(image_ref: &str) -> Result<GrayImage, ImageRefError> {
    let err = || ImageRefError(image_ref.to_string());
    let mut parts = image_ref.split(':');
    let (Some("synth"), Some(regime), Some(n), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(err());
    };
    let regime = Regime::from_short_name(regime).ok_or_else(err)?;
    let n: u64 = n.parse().map_err(|_| err())?;
    let clean = generate_clean_study(&mut seeded(n, streams::STUDY_BASE), 0, 0);
    if regime == Regime::Standard {
        return Ok(clean.image);
    }
    let mut rng = seeded(n, streams::STUDY_BASE + 1);
    let spec = DegradationGrade::default_for(regime).sample_spec(&mut rng);
    Ok(degrade(&clean, &spec, regime, &mut rng).image)
}
