//! Domain types shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Identity label.
pub type IdentityId = u32;

/// A face feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T>(Vec<T>);

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("embedding has zero dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("embedding contains non-finite values"));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

/// Axis-aligned box in pixels, `(x, y)` being the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::validation("bounding box is not finite"));
        }
        if w <= T::zero() || h <= T::zero() {
            return Err(Error::validation(format!(
                "bounding box needs positive size, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn center(&self) -> (T, T) {
        let half = T::of(0.5);
        (self.x + self.w * half, self.y + self.h * half)
    }

    /// Builds a box from center, area and aspect ratio `w / h`.
    pub fn from_center_area(u: T, v: T, area: T, aspect: T) -> Self {
        let w = (area * aspect).max(T::zero()).sqrt();
        let h = if w > T::zero() { area / w } else { T::zero() };
        let half = T::of(0.5);
        BoundingBox {
            x: u - w * half,
            y: v - h * half,
            w,
            h,
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        iou(self, other)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= T::zero() || iy <= T::zero() {
        return T::zero();
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

/// One detected face in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub video_id: String,
    pub frame: u32,
    pub bbox: BoundingBox<f64>,
    /// Detector confidence, strictly inside `(0, 1)`.
    pub score: f64,
    /// Row of this detection's embedding in the dataset's id table.
    pub embedding: usize,
    pub truth_id: Option<IdentityId>,
}

impl Detection {
    pub fn new(
        video_id: impl Into<String>,
        frame: u32,
        bbox: BoundingBox<f64>,
        score: f64,
        embedding: usize,
        truth_id: Option<IdentityId>,
    ) -> Result<Self> {
        if !(score > 0.0 && score < 1.0) {
            return Err(Error::validation(format!(
                "detection score {score} outside (0, 1)"
            )));
        }
        Ok(Detection {
            video_id: video_id.into(),
            frame,
            bbox,
            score,
            embedding,
            truth_id,
        })
    }
}

/// A set of embeddings with aligned detection scores; the unit of matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Template<T> {
    samples: Vec<Embedding<T>>,
    qualities: Vec<T>,
    pub label: Option<IdentityId>,
}

impl<T: Scalar> Template<T> {
    pub fn new(
        samples: Vec<Embedding<T>>,
        qualities: Vec<T>,
        label: Option<IdentityId>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("template has no samples"));
        }
        if samples.len() != qualities.len() {
            return Err(Error::validation(format!(
                "template has {} samples but {} quality scores",
                samples.len(),
                qualities.len()
            )));
        }
        let dim = samples[0].dim();
        if samples.iter().any(|s| s.dim() != dim) {
            return Err(Error::validation("template samples differ in dimension"));
        }
        Ok(Template {
            samples,
            qualities,
            label,
        })
    }

    /// Convenience constructor from raw vectors.
    pub fn from_vectors(
        vectors: Vec<Vec<T>>,
        qualities: Vec<T>,
        label: Option<IdentityId>,
    ) -> Result<Self> {
        let samples = vectors
            .into_iter()
            .map(Embedding::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, qualities, label)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn samples(&self) -> &[Embedding<T>] {
        &self.samples
    }

    pub fn qualities(&self) -> &[T] {
        &self.qualities
    }

    /// Samples as the columns of a `D x N` matrix.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.dim(), self.len(), |i, j| self.samples[j].as_slice()[i])
    }
}
