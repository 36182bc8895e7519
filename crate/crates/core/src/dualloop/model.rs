use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AdError, FlatVector, GradVector, ParamVector, Result, Tape, Tensor};
use crate::domain::NUM_FINDINGS;
use crate::synth::SyntheticStudy;

/// Subtracted from every pixel so the mean-intensity direction does not
/// dominate the loss curvature.
pub const PIXEL_CENTER: f64 = 0.5;

/// A minibatch that can be merged with others of its kind.
pub trait Batch: Sized {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates `parts` in order. An empty slice is an error.
    fn concat(parts: &[&Self]) -> Result<Self>;
}

/// A batch type that supports drawing rows by index.
pub trait Gather: Batch {
    fn gather(&self, rows: &[usize]) -> Self;
}

/// A differentiable training loss.
pub trait Objective {
    type Batch: Batch;

    fn loss(&self, theta: &ParamVector, batch: &Self::Batch) -> Result<f64>;

    fn loss_and_grad(&self, theta: &ParamVector, batch: &Self::Batch) -> Result<(f64, GradVector)>;

    fn grad(&self, theta: &ParamVector, batch: &Self::Batch) -> Result<GradVector> {
        Ok(self.loss_and_grad(theta, batch)?.1)
    }
}

/// Dense features with multi-label {0,1} targets, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    dim: usize,
    outputs: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl LabeledBatch {
    pub fn new(dim: usize, outputs: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<LabeledBatch> {
        if dim == 0 || outputs == 0 || !features.len().is_multiple_of(dim) {
            return Err(AdError::Length {
                shape: vec![features.len() / dim.max(1), dim],
                expected: dim,
                got: features.len(),
            });
        }
        let rows = features.len() / dim;
        if targets.len() != rows * outputs {
            return Err(AdError::Length {
                shape: vec![rows, outputs],
                expected: rows * outputs,
                got: targets.len(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(AdError::Target(bad));
        }
        Ok(LabeledBatch {
            dim,
            outputs,
            features,
            targets,
        })
    }

    pub fn empty(dim: usize, outputs: usize) -> LabeledBatch {
        LabeledBatch {
            dim,
            outputs,
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Pixels shifted by [`PIXEL_CENTER`] as features, finding flags as targets.
    pub fn from_studies(studies: &[SyntheticStudy]) -> LabeledBatch {
        let dim = studies.first().map_or(crate::synth::IMAGE_PIXELS, |s| s.image.pixels().len());
        let mut features = Vec::with_capacity(studies.len() * dim);
        let mut targets = Vec::with_capacity(studies.len() * NUM_FINDINGS);
        for s in studies {
            assert_eq!(s.image.pixels().len(), dim, "studies must share an image size");
            features.extend(s.image.pixels().iter().map(|&p| f64::from(p) - PIXEL_CENTER));
            targets.extend((0..NUM_FINDINGS).map(|k| if s.labels.has(k) { 1.0 } else { 0.0 }));
        }
        LabeledBatch {
            dim,
            outputs: NUM_FINDINGS,
            features,
            targets,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.outputs..(i + 1) * self.outputs]
    }
}

impl Batch for LabeledBatch {
    fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    fn concat(parts: &[&LabeledBatch]) -> Result<LabeledBatch> {
        let first = parts.first().ok_or(AdError::Empty("concat"))?;
        let mut out = LabeledBatch::empty(first.dim, first.outputs);
        for p in parts {
            if (p.dim, p.outputs) != (first.dim, first.outputs) {
                return Err(AdError::Shape {
                    op: "concat",
                    left: vec![first.dim, first.outputs],
                    right: vec![p.dim, p.outputs],
                });
            }
            out.features.extend_from_slice(&p.features);
            out.targets.extend_from_slice(&p.targets);
        }
        Ok(out)
    }
}

impl Gather for LabeledBatch {
    fn gather(&self, rows: &[usize]) -> LabeledBatch {
        let mut out = LabeledBatch::empty(self.dim, self.outputs);
        out.features.reserve(rows.len() * self.dim);
        out.targets.reserve(rows.len() * self.outputs);
        for &r in rows {
            out.features.extend_from_slice(self.row(r));
            out.targets.extend_from_slice(self.target_row(r));
        }
        out
    }
}

/// Multi-label classifier trained with mean BCE-with-logits: one ReLU hidden
/// layer, or a linear logistic model when `hidden` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden: Option<usize>,
    pub outputs: usize,
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: Option<usize>, outputs: usize) -> Mlp {
        Mlp {
            input_dim,
            hidden,
            outputs,
        }
    }

    fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self.hidden {
            Some(h) => vec![
                ("w1", vec![self.input_dim, h]),
                ("b1", vec![h]),
                ("w2", vec![h, self.outputs]),
                ("b2", vec![self.outputs]),
            ],
            None => vec![("w", vec![self.input_dim, self.outputs]), ("b", vec![self.outputs])],
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let segments = self
            .shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if shape.len() == 2 {
                    let std = libm::sqrt(2.0 / shape[0] as f64);
                    let normal = Normal::new(0.0, std).expect("positive std");
                    (0..n).map(|_| normal.sample(rng)).collect()
                } else {
                    vec![0.0; n]
                };
                (name.to_string(), Tensor::new(&shape, data).expect("shape matches data"))
            })
            .collect();
        ParamVector::from_segments(segments).expect("fixed layout")
    }

    fn check(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<()> {
        let expected = self.shapes();
        let layout = theta.layout().segments();
        let same = layout.len() == expected.len()
            && layout.iter().zip(&expected).all(|(s, (n, sh))| s.name == *n && &s.shape == sh);
        if !same {
            return Err(AdError::Layout);
        }
        if batch.dim != self.input_dim || batch.outputs != self.outputs {
            return Err(AdError::Shape {
                op: "mlp",
                left: vec![self.input_dim, self.outputs],
                right: vec![batch.dim, batch.outputs],
            });
        }
        Ok(())
    }

    fn record(&self, tape: &mut Tape, theta: &ParamVector, features: &[f64], rows: usize) -> Result<crate::autodiff::Var> {
        let p = tape.params(theta)?;
        let x = tape.constant(Tensor::matrix(rows, self.input_dim, features.to_vec())?)?;
        let z = match self.hidden {
            Some(_) => {
                let a = tape.matmul(x, p[0])?;
                let a = tape.add(a, p[1])?;
                let h = tape.relu(a)?;
                let z = tape.matmul(h, p[2])?;
                tape.add(z, p[3])?
            }
            None => {
                let z = tape.matmul(x, p[0])?;
                tape.add(z, p[1])?
            }
        };
        Ok(z)
    }

    /// Logits, row-major `[rows, outputs]`.
    pub fn logits(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<Vec<f64>> {
        self.check(theta, batch)?;
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let z = self.record(&mut tape, theta, &batch.features, batch.len())?;
        Ok(tape.value(z).data().to_vec())
    }

    /// Per-label probabilities, row-major `[rows, outputs]`.
    pub fn predict_proba(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<Vec<f64>> {
        Ok(self
            .logits(theta, batch)?
            .into_iter()
            .map(crate::autodiff::sigmoid)
            .collect())
    }

    fn build(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<(Tape, crate::autodiff::Var)> {
        self.check(theta, batch)?;
        if batch.is_empty() {
            return Err(AdError::Empty("loss"));
        }
        let mut tape = Tape::new();
        let z = self.record(&mut tape, theta, &batch.features, batch.len())?;
        let y = tape.constant(Tensor::matrix(batch.len(), self.outputs, batch.targets.clone())?)?;
        let loss = tape.bce_with_logits(z, y)?;
        Ok((tape, loss))
    }
}

impl Objective for Mlp {
    type Batch = LabeledBatch;

    fn loss(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<f64> {
        let (tape, loss) = self.build(theta, batch)?;
        Ok(tape.value(loss).data()[0])
    }

    fn loss_and_grad(&self, theta: &ParamVector, batch: &LabeledBatch) -> Result<(f64, GradVector)> {
        let (tape, loss) = self.build(theta, batch)?;
        let g = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], g))
    }
}
