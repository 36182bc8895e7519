use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{AdError, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl SegmentSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names, shapes and flat offsets of the parameter blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<SegmentSpec>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(segments: Vec<SegmentSpec>) -> Result<Layout> {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0;
        for s in &segments {
            if s.shape.len() > 2 {
                return Err(AdError::Rank(s.shape.len()));
            }
            offsets.push(total);
            total += s.len();
        }
        Ok(Layout {
            segments,
            offsets,
            total,
        })
    }

    pub fn segments(&self) -> &[SegmentSpec] {
        &self.segments
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn range(&self, index: usize) -> core::ops::Range<usize> {
        let start = self.offsets[index];
        start..start + self.segments[index].len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }
}

/// Shared behavior of parameter-shaped flat vectors.
pub trait FlatVector: Sized {
    fn layout(&self) -> &Arc<Layout>;
    fn values(&self) -> &[f64];
    fn from_parts(layout: Arc<Layout>, values: Vec<f64>) -> Self;

    fn total_dim(&self) -> usize {
        self.values().len()
    }

    fn segment(&self, name: &str) -> Option<Tensor> {
        let layout = self.layout();
        let index = layout.position(name)?;
        let spec = &layout.segments()[index];
        Some(Tensor::from_parts(
            spec.shape.clone(),
            self.values()[layout.range(index)].to_vec(),
        ))
    }

    fn segment_values(&self, index: usize) -> &[f64] {
        &self.values()[self.layout().range(index)]
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

fn conformable(a: &Arc<Layout>, b: &Arc<Layout>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

macro_rules! flat_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            layout: Arc<Layout>,
            values: Vec<f64>,
        }

        impl FlatVector for $name {
            fn layout(&self) -> &Arc<Layout> {
                &self.layout
            }

            fn values(&self) -> &[f64] {
                &self.values
            }

            fn from_parts(layout: Arc<Layout>, values: Vec<f64>) -> Self {
                assert_eq!(layout.total_dim(), values.len(), "flat length must match layout");
                $name { layout, values }
            }
        }

        impl $name {
            pub fn zeros(layout: Arc<Layout>) -> Self {
                let values = vec![0.0; layout.total_dim()];
                $name { layout, values }
            }

            /// Rebuilds from a flat slice; fails if the length disagrees with the layout.
            pub fn unflatten(layout: Arc<Layout>, flat: &[f64]) -> Result<Self> {
                if flat.len() != layout.total_dim() {
                    return Err(AdError::Length {
                        shape: vec![layout.total_dim()],
                        expected: layout.total_dim(),
                        got: flat.len(),
                    });
                }
                Ok($name {
                    layout,
                    values: flat.to_vec(),
                })
            }

            pub fn flatten(&self) -> Vec<f64> {
                self.values.clone()
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }
        }
    };
}

flat_vector!(
    /// Model parameters θ as named blocks over one flat buffer.
    ParamVector
);
flat_vector!(
    /// A gradient ∂L/∂θ, layout-conformable with the parameters it was taken at.
    GradVector
);

impl ParamVector {
    /// Builds from named tensors, in order.
    pub fn from_segments(segments: Vec<(String, Tensor)>) -> Result<ParamVector> {
        let specs = segments
            .iter()
            .map(|(name, t)| SegmentSpec {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        let layout = Arc::new(Layout::new(specs)?);
        let mut values = Vec::with_capacity(layout.total_dim());
        for (_, t) in segments {
            values.extend_from_slice(t.data());
        }
        Ok(ParamVector { layout, values })
    }

    /// Single unnamed-block convenience for vector-valued toy problems.
    pub fn from_vec(name: &str, values: Vec<f64>) -> ParamVector {
        let layout = Layout::new(vec![SegmentSpec {
            name: name.into(),
            shape: vec![values.len()],
        }])
        .expect("rank-1 segment");
        ParamVector {
            layout: Arc::new(layout),
            values,
        }
    }

    /// Copy with one coordinate overwritten (for finite differences).
    pub fn with_coordinate(&self, index: usize, value: f64) -> ParamVector {
        let mut values = self.values.clone();
        values[index] = value;
        ParamVector {
            layout: self.layout.clone(),
            values,
        }
    }
}

impl GradVector {
    /// Reinterprets a gradient (or any direction) as a parameter-shaped vector.
    pub fn to_params(&self) -> ParamVector {
        ParamVector::from_parts(self.layout.clone(), self.values.clone())
    }
}

impl ParamVector {
    pub fn to_grad(&self) -> GradVector {
        GradVector::from_parts(self.layout.clone(), self.values.clone())
    }
}

/// Inner product of two conformable vectors.
pub fn dot<A: FlatVector, B: FlatVector>(a: &A, b: &B) -> Result<f64> {
    if !conformable(a.layout(), b.layout()) {
        return Err(AdError::Layout);
    }
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum())
}

/// Euclidean norm; rescaled so huge finite entries do not overflow.
pub fn norm<A: FlatVector>(a: &A) -> f64 {
    let scale = a.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * libm::sqrt(a.values().iter().map(|x| (x / scale) * (x / scale)).sum())
}

/// cos of the angle between `a` and `b`; a zero vector is a degenerate-gradient error.
pub fn cosine<A: FlatVector, B: FlatVector>(a: &A, b: &B) -> Result<f64> {
    let d = dot(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(AdError::DegenerateGradient);
    }
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

/// Returns `b + scale·a` as a fresh vector of `b`'s type.
pub fn axpy<A: FlatVector, B: FlatVector>(scale: f64, a: &A, b: &B) -> Result<B> {
    if !conformable(a.layout(), b.layout()) {
        return Err(AdError::Layout);
    }
    // b + 0·a is not bit-identical to b when b holds -0.0.
    if scale == 0.0 {
        return Ok(B::from_parts(b.layout().clone(), b.values().to_vec()));
    }
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| y + scale * x)
        .collect();
    Ok(B::from_parts(b.layout().clone(), values))
}
