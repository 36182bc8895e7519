use std::collections::HashMap;

use anyhow::{bail, Context};
use lrrg_core::curation::{
    consistency_rate, extract_retake_pairs, grade_quality, GraderVerdict, KeywordScreener, MockRuleGrader,
    QualityGrader, StudyMeta, VerdictSource,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::fsutil::atomic_write;
use crate::images::resolve_image_ref;
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::manifest::ManifestBuilder;
use crate::paths::RUN_MANIFEST;
use crate::remote::HttpGrader;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurateSummary {
    pub studies: usize,
    pub pairs: usize,
    pub consistent: usize,
    /// `None` when no pair qualified.
    pub consistency_rate: Option<f64>,
    pub grader: String,
    /// Verdicts that fell back to the rule grader after remote failures.
    pub fallback_verdicts: usize,
    pub unresolved_images: usize,
}

pub fn curate(config: &RunConfig) -> anyhow::Result<CurateSummary> {
    let mut manifest = ManifestBuilder::new("curate", config.echo());
    let Some(metadata) = &config.metadata else {
        bail!("curate needs `curate.metadata=<path to JSON-lines metadata>`");
    };
    let rows: Vec<(usize, StudyMeta)> = read_jsonl(metadata)?;
    let mut first_line = HashMap::new();
    for (line, m) in &rows {
        m.validate()
            .with_context(|| format!("{}: line {line}: study {}", metadata.display(), m.study_id))?;
        if let Some(prev) = first_line.insert(m.study_id, *line) {
            bail!("{}: line {line}: study id {} already used on line {prev}", metadata.display(), m.study_id);
        }
    }
    manifest.input(metadata);
    let studies: Vec<StudyMeta> = rows.into_iter().map(|(_, m)| m).collect();

    let pairs = extract_retake_pairs(&studies, &KeywordScreener::default());
    for p in &pairs {
        p.check()?;
    }

    let remote = HttpGrader::from_settings(&config.grader);
    let mock = MockRuleGrader::default();
    let grader: &dyn QualityGrader = match &remote {
        Some(r) => r,
        None => &mock,
    };
    let mut verdicts: Vec<GraderVerdict> = Vec::with_capacity(2 * pairs.len());
    let mut levels = HashMap::new();
    let mut unresolved_images = 0;
    for s in pairs.iter().flat_map(|p| [&p.pre, &p.post]) {
        let image = match s.image_ref.as_deref().map(resolve_image_ref) {
            Some(Ok(img)) => Some(img),
            Some(Err(e)) => {
                eprintln!("warning: study {}: {e}; grading from metadata only", s.study_id);
                unresolved_images += 1;
                None
            }
            None => None,
        };
        let v = grade_quality(s, image.as_ref(), grader)?;
        levels.insert(s.study_id, v.level);
        verdicts.push(v);
    }
    let fallback_verdicts = if remote.is_some() {
        verdicts.iter().filter(|v| v.source == VerdictSource::MockRule).count()
    } else {
        0
    };
    if fallback_verdicts > 0 {
        eprintln!("warning: {fallback_verdicts} verdicts fell back to the rule grader after remote failures");
    }

    let (rate, consistent) = if pairs.is_empty() {
        (None, 0)
    } else {
        let rate = consistency_rate(&pairs, |m| levels[&m.study_id])?;
        let consistent = pairs.iter().filter(|p| levels[&p.pre.study_id] >= levels[&p.post.study_id]).count();
        (Some(rate), consistent)
    };
    let summary = CurateSummary {
        studies: studies.len(),
        pairs: pairs.len(),
        consistent,
        consistency_rate: rate,
        grader: if remote.is_some() { "remote" } else { "mock" }.into(),
        fallback_verdicts,
        unresolved_images,
    };

    let dir = config.out.join("curate");
    let pairs_path = dir.join("pairs.jsonl");
    let verdicts_path = dir.join("verdicts.jsonl");
    let report_path = dir.join("consistency.json");
    write_jsonl(&pairs_path, &pairs)?;
    write_jsonl(&verdicts_path, &verdicts)?;
    let mut report = serde_json::to_vec_pretty(&summary)?;
    report.push(b'\n');
    atomic_write(&report_path, &report)?;
    for p in [&pairs_path, &verdicts_path, &report_path] {
        manifest.artifact(p);
    }
    manifest.finish(&dir.join(RUN_MANIFEST))?;
    Ok(summary)
}
