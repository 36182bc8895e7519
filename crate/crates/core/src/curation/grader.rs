use alloc::format;
use alloc::string::String;

use super::iqa::{deviation_index, iqa_proxies, IqaScores};
use super::meta::StudyMeta;
use super::retake::RetakePair;
use super::CurationError;
use crate::synth::GrayImage;

/// Three-level technical quality grade; severity increases with the level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum QualityLevel {
    #[cfg_attr(feature = "serde", serde(rename = "L1_Standard"))]
    Standard,
    #[cfg_attr(feature = "serde", serde(rename = "L2_Mild"))]
    Mild,
    #[cfg_attr(feature = "serde", serde(rename = "L3_Severe"))]
    Severe,
}

impl QualityLevel {
    pub fn from_number(n: u8) -> Option<QualityLevel> {
        match n {
            1 => Some(QualityLevel::Standard),
            2 => Some(QualityLevel::Mild),
            3 => Some(QualityLevel::Severe),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            QualityLevel::Standard => 1,
            QualityLevel::Mild => 2,
            QualityLevel::Severe => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum VerdictSource {
    Remote,
    MockRule,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraderVerdict {
    pub study_id: u64,
    pub level: QualityLevel,
    pub priors: IqaScores,
    pub rationale: String,
    pub source: VerdictSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradeRequest<'a> {
    pub image_ref: Option<&'a str>,
    pub scores: IqaScores,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("grader endpoint returned status {0}")]
    Status(u16),
    #[error("malformed grader response: {0}")]
    Malformed(String),
}

/// Request/response port to a quality grader: prompt in, raw text out.
pub trait QualityGrader: Send + Sync {
    fn complete(&self, request: &GradeRequest<'_>) -> Result<String, GraderError>;
    fn source(&self) -> VerdictSource;
}

pub const ANSWER_FORMAT_LINE: &str = "ANSWER FORMAT: LEVEL: <1|2|3>";

/// Deterministic grading prompt embedding the numeric priors.
pub fn build_prompt(scores: &IqaScores) -> String {
    format!(
        "Task: grade the technical image quality of a frontal chest radiograph.\n\
         Apply the European quality criteria for chest radiographs (CEC EUR 16260) and check:\n\
         1. Anatomical landmarks: full inspiration, symmetric clavicles, scapulae clear of the lung fields.\n\
         2. Coverage: lung apices, costophrenic angles and lateral rib margins inside the field of view.\n\
         3. Detail: vascular pattern visible to the periphery, sharp trachea, diaphragm and heart borders.\n\
         4. Exposure adequacy: thoracic spine faintly visible through the heart, no burned-out or flat regions.\n\
         5. Artifacts: motion blur, noise, grid lines or foreign objects that hide anatomy.\n\
         Objective priors for this image:\n\
         - deviation_index_db: {:.4}\n\
         - sharpness: {:.4}\n\
         - noise_est: {:.4}\n\
         - contrast: {:.4}\n\
         - entropy_bits: {:.4}\n\
         Levels: 1 = standard (all criteria met), 2 = mildly suboptimal (diagnostic with minor deficits), \
         3 = severely suboptimal (key criteria failed).\n\
         Give a short rationale, then put the level alone on the final line.\n\
         {}",
        scores.di, scores.sharpness, scores.noise_est, scores.contrast, scores.entropy, ANSWER_FORMAT_LINE
    )
}

/// Finds the last `LEVEL: n` (n ∈ 1..=3) in a grader response.
pub fn parse_level(text: &str) -> Option<QualityLevel> {
    let mut found = None;
    let mut rest = text;
    while let Some(pos) = rest.find("LEVEL:") {
        let after = rest[pos + "LEVEL:".len()..].trim_start_matches([' ', '\t']);
        let mut chars = after.chars();
        if let Some(d) = chars.next().and_then(|c| c.to_digit(10)) {
            let terminated = chars.next().is_none_or(|c| !c.is_ascii_digit());
            if terminated {
                if let Some(level) = QualityLevel::from_number(d as u8) {
                    found = Some(level);
                }
            }
        }
        rest = &rest[pos + 1..];
    }
    found
}

/// Cutoffs of the offline rule grader.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MockThresholds {
    pub mild_noise: f64,
    pub severe_noise: f64,
    /// |DI| in dB.
    pub mild_di: f64,
    pub severe_di: f64,
}

impl Default for MockThresholds {
    fn default() -> MockThresholds {
        MockThresholds {
            mild_noise: 0.05,
            severe_noise: 0.085,
            mild_di: 3.0,
            severe_di: 6.0,
        }
    }
}

/// Deterministic rule grader on the numeric priors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MockRuleGrader {
    pub thresholds: MockThresholds,
}

impl MockRuleGrader {
    pub fn classify(&self, scores: &IqaScores) -> (QualityLevel, String) {
        let t = &self.thresholds;
        let noise = if scores.noise_est >= t.severe_noise {
            QualityLevel::Severe
        } else if scores.noise_est >= t.mild_noise {
            QualityLevel::Mild
        } else {
            QualityLevel::Standard
        };
        let di = libm::fabs(scores.di);
        let exposure = if di >= t.severe_di {
            QualityLevel::Severe
        } else if di >= t.mild_di {
            QualityLevel::Mild
        } else {
            QualityLevel::Standard
        };
        let level = noise.max(exposure);
        let rationale = format!(
            "noise_est {:.4} -> level {}, |DI| {:.4} -> level {}",
            scores.noise_est,
            noise.number(),
            di,
            exposure.number()
        );
        (level, rationale)
    }
}

impl QualityGrader for MockRuleGrader {
    fn complete(&self, request: &GradeRequest<'_>) -> Result<String, GraderError> {
        let (level, rationale) = self.classify(&request.scores);
        Ok(format!("{rationale}\nLEVEL: {}", level.number()))
    }

    fn source(&self) -> VerdictSource {
        VerdictSource::MockRule
    }
}

/// Scores a study, asks the grader (one retry on an unparsable answer or a
/// transport failure), and falls back to the rule grader.
pub fn grade_quality(
    study: &StudyMeta,
    image: Option<&GrayImage>,
    grader: &dyn QualityGrader,
) -> Result<GraderVerdict, CurationError> {
    let di = deviation_index(study.ei, study.ei_t)?;
    let image_quality = image.map(iqa_proxies).unwrap_or_default();
    let scores = IqaScores::new(di, image_quality);
    let prompt = build_prompt(&scores);
    let request = GradeRequest {
        image_ref: study.image_ref.as_deref(),
        scores,
        prompt: &prompt,
    };

    let mut last_problem = String::new();
    for _ in 0..2 {
        match grader.complete(&request) {
            Ok(text) => match parse_level(&text) {
                Some(level) => {
                    return Ok(GraderVerdict {
                        study_id: study.study_id,
                        level,
                        priors: scores,
                        rationale: text.trim().into(),
                        source: grader.source(),
                    })
                }
                None => last_problem = String::from("unparsable answer"),
            },
            Err(e) => last_problem = format!("{e}"),
        }
    }

    let (level, rationale) = MockRuleGrader::default().classify(&scores);
    Ok(GraderVerdict {
        study_id: study.study_id,
        level,
        priors: scores,
        rationale: format!("fallback after grader failure ({last_problem}): {rationale}"),
        source: VerdictSource::MockRule,
    })
}

/// Fraction of pairs whose pre-retake exam is graded at least as severe as
/// the post-retake exam.
pub fn consistency_rate(
    pairs: &[RetakePair],
    mut level_of: impl FnMut(&StudyMeta) -> QualityLevel,
) -> Result<f64, CurationError> {
    if pairs.is_empty() {
        return Err(CurationError::NoPairs);
    }
    let consistent = pairs.iter().filter(|p| level_of(&p.pre) >= level_of(&p.post)).count();
    Ok(consistent as f64 / pairs.len() as f64)
}
