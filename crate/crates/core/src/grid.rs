//! Per-image H×W grids: acquisition scores and class-id maps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape::DatasetShape;

pub type ClassId = u16;
pub type ImageId = u32;

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape("grid dimensions must be positive".into()));
    }
    match height.checked_mul(width) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::Shape(format!(
            "expected {height}x{width} values, got {len}"
        ))),
    }
}

/// Acquisition scores of one image, row-major. Every score is finite and `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    image_id: ImageId,
    height: usize,
    width: usize,
    scores: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn new(image_id: ImageId, height: usize, width: usize, mut scores: Vec<T>) -> Result<Self> {
        check_len(height, width, scores.len())?;
        for (index, s) in scores.iter_mut().enumerate() {
            if !s.is_finite() || *s < T::zero() {
                return Err(Error::InvalidScore {
                    index,
                    value: s.to_f64_lossy(),
                });
            }
            // -0.0 -> +0.0 so that every ordering agrees on zero scores
            *s = *s + T::zero();
        }
        Ok(Self {
            image_id,
            height,
            width,
            scores,
        })
    }

    pub fn from_fn(
        image_id: ImageId,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut scores = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                scores.push(f(r, c));
            }
        }
        Self::new(image_id, height, width, scores)
    }

    /// Skips validation; callers guarantee the score invariant.
    pub(crate) fn from_trusted(
        image_id: ImageId,
        height: usize,
        width: usize,
        scores: Vec<T>,
    ) -> Self {
        debug_assert_eq!(scores.len(), height * width);
        debug_assert!(scores.iter().all(|s| s.is_finite() && *s >= T::zero()));
        Self {
            image_id,
            height,
            width,
            scores,
        }
    }

    pub fn image_id(&self) -> ImageId {
        self.image_id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[T] {
        &self.scores
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.scores[row * self.width + col]
    }

    pub fn mean(&self) -> T {
        let sum = self.scores.iter().fold(T::zero(), |acc, &s| acc + s);
        sum / T::of(self.scores.len() as f64)
    }
}

/// Class ids of one image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    image_id: ImageId,
    height: usize,
    width: usize,
    labels: Vec<ClassId>,
}

/// Per-pixel argmax of predicted class probabilities.
pub type PseudoLabelMap = LabelMap;

impl LabelMap {
    pub fn new(
        image_id: ImageId,
        height: usize,
        width: usize,
        labels: Vec<ClassId>,
        num_classes: usize,
    ) -> Result<Self> {
        check_len(height, width, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= num_classes) {
            return Err(Error::Class {
                class: bad.into(),
                num_classes,
            });
        }
        Ok(Self {
            image_id,
            height,
            width,
            labels,
        })
    }

    pub(crate) fn from_trusted(
        image_id: ImageId,
        height: usize,
        width: usize,
        labels: Vec<ClassId>,
    ) -> Self {
        debug_assert_eq!(labels.len(), height * width);
        Self {
            image_id,
            height,
            width,
            labels,
        }
    }

    pub fn image_id(&self) -> ImageId {
        self.image_id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.labels[row * self.width + col]
    }

    pub fn same_grid<T>(&self, scores: &ScoreMatrix<T>) -> bool {
        self.image_id == scores.image_id
            && self.height == scores.height
            && self.width == scores.width
    }
}

/// Ground-truth class maps for every target image, ordered by image index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundTruth {
    shape: DatasetShape,
    maps: Vec<LabelMap>,
}

impl GroundTruth {
    pub fn new(shape: DatasetShape, maps: Vec<LabelMap>) -> Result<Self> {
        if maps.len() != shape.num_images() {
            return Err(Error::Shape(format!(
                "expected {} ground-truth maps, got {}",
                shape.num_images(),
                maps.len()
            )));
        }
        for m in &maps {
            if m.height != shape.height() || m.width != shape.width() {
                return Err(Error::Shape(format!(
                    "ground-truth map {} is {}x{}, expected {}x{}",
                    m.image_id,
                    m.height,
                    m.width,
                    shape.height(),
                    shape.width()
                )));
            }
            if let Some(&bad) = m
                .labels
                .iter()
                .find(|&&l| usize::from(l) >= shape.num_classes())
            {
                return Err(Error::Class {
                    class: bad.into(),
                    num_classes: shape.num_classes(),
                });
            }
        }
        Ok(Self { shape, maps })
    }

    pub fn shape(&self) -> &DatasetShape {
        &self.shape
    }

    pub fn maps(&self) -> &[LabelMap] {
        &self.maps
    }

    pub fn map(&self, image_index: usize) -> &LabelMap {
        &self.maps[image_index]
    }

    /// Pixel count per class over the whole set.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.shape.num_classes()];
        for m in &self.maps {
            for &l in &m.labels {
                counts[usize::from(l)] += 1;
            }
        }
        counts
    }
}
