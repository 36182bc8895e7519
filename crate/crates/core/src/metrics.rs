//! Template report rendering and the NLG / label metrics used to score it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::AdError;
use crate::domain::{FindingMask, NUM_FINDINGS};
use crate::dualloop::{Batch, LabeledBatch, Mlp};
use crate::synth::SyntheticStudy;

/// Smoothing count substituted for zero n-gram matches at orders ≥ 2.
pub const BLEU_EPSILON: f64 = 1e-9;

pub const FINDING_SENTENCES: [&str; NUM_FINDINGS] = [
    "There is a focal opacity in the left lower zone.",
    "There is a focal opacity in the right upper zone.",
    "A rounded density projects over the right lower zone.",
    "Patchy consolidation is seen in the left upper zone.",
];

pub const NO_FINDING_SENTENCE: &str = "No acute cardiopulmonary findings.";

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference report is empty")]
    EmptyReference,
    #[error("{predicted} predictions for {truth} ground-truth masks")]
    Length { predicted: usize, truth: usize },
    #[error("evaluation set is empty")]
    EmptyDataset,
    #[error("threshold {0} is outside (0, 1)")]
    Threshold(f64),
    #[error("BLEU order must be at least 1")]
    Order,
    #[error("model evaluation failed: {0}")]
    Model(#[from] AdError),
}

/// Lowercase word tokens; never contains an empty token.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.split_whitespace()
            .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).flat_map(char::to_lowercase).collect::<String>())
            .filter(|w| !w.is_empty())
            .collect(),
    )
}

/// Report text for a finding mask: one sentence per present finding in
/// finding order, or the no-finding sentence for the empty mask.
pub fn render_text(mask: FindingMask) -> String {
    if mask.is_empty() {
        return NO_FINDING_SENTENCE.into();
    }
    let parts: Vec<&str> = (0..NUM_FINDINGS).filter(|&k| mask.has(k)).map(|k| FINDING_SENTENCES[k]).collect();
    parts.join(" ")
}

pub fn render_report(mask: FindingMask) -> TokenSeq {
    tokenize(&render_text(mask))
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with clipped n-gram precision over orders `1..=n`, a
/// geometric mean and the brevity penalty.
pub fn bleu(hyp: &TokenSeq, reference: &TokenSeq, n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Order);
    }
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let h = ngram_counts(&hyp.0, k);
        let r = ngram_counts(&reference.0, k);
        let total = hyp.len().saturating_sub(k - 1);
        let matched: usize = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if k == 1 {
            return Ok(0.0);
        } else {
            BLEU_EPSILON / total.max(1) as f64
        };
        log_sum += libm::log(p);
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { libm::exp(1.0 - r / c) } else { 1.0 };
    Ok((bp * libm::exp(log_sum / n as f64)).clamp(0.0, 1.0))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence; 0 if either side is empty.
pub fn rouge_l(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    let lcs = lcs_len(&hyp.0, &reference.0);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

/// Micro-averaged label scores with their per-label cell counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: [LabelCounts; NUM_FINDINGS],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn label_prf(predicted: &[FindingMask], truth: &[FindingMask]) -> Result<LabelScores, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::Length {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut per_label = [LabelCounts::default(); NUM_FINDINGS];
    for (p, t) in predicted.iter().zip(truth) {
        for (k, c) in per_label.iter_mut().enumerate() {
            match (p.has(k), t.has(k)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let tp: usize = per_label.iter().map(|c| c.tp).sum();
    let fp: usize = per_label.iter().map(|c| c.fp).sum();
    let fn_: usize = per_label.iter().map(|c| c.fn_).sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(LabelScores {
        precision,
        recall,
        f1,
        per_label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    /// Per-sample means against the truth-rendered reference.
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: [LabelCounts; NUM_FINDINGS],
    pub samples: usize,
}

/// Renders both sides and scores them.
pub fn evaluate_predictions(predicted: &[FindingMask], truth: &[FindingMask]) -> Result<MetricsReport, MetricsError> {
    let labels = label_prf(predicted, truth)?;
    if truth.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let (mut b1, mut b4, mut rl) = (0.0, 0.0, 0.0);
    for (&p, &t) in predicted.iter().zip(truth) {
        let (h, r) = (render_report(p), render_report(t));
        b1 += bleu(&h, &r, 1)?;
        b4 += bleu(&h, &r, 4)?;
        rl += rouge_l(&h, &r);
    }
    let n = truth.len() as f64;
    Ok(MetricsReport {
        bleu1: b1 / n,
        bleu4: b4 / n,
        rouge_l: rl / n,
        precision: labels.precision,
        recall: labels.recall,
        f1: labels.f1,
        per_label: labels.per_label,
        samples: truth.len(),
    })
}

/// Thresholded per-label probabilities as masks.
pub fn predict_masks(model: &Mlp, theta: &crate::autodiff::ParamVector, batch: &LabeledBatch, threshold: f64) -> Result<Vec<FindingMask>, MetricsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::Threshold(threshold));
    }
    let probs = model.predict_proba(theta, batch)?;
    Ok(probs
        .chunks(model.outputs)
        .map(|row| {
            let mut flags = [false; NUM_FINDINGS];
            for (f, &p) in flags.iter_mut().zip(row) {
                *f = p >= threshold;
            }
            FindingMask::from_flags(flags)
        })
        .collect())
}

pub fn evaluate_model(
    model: &Mlp,
    theta: &crate::autodiff::ParamVector,
    studies: &[SyntheticStudy],
    threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    if studies.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let batch = LabeledBatch::from_studies(studies);
    debug_assert_eq!(batch.len(), studies.len());
    let predicted = predict_masks(model, theta, &batch, threshold)?;
    let truth: Vec<FindingMask> = studies.iter().map(|s| s.labels).collect();
    evaluate_predictions(&predicted, &truth)
}
