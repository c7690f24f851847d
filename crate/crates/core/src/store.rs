//! Sparse, append-only record of labelled pixels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ClassId, GroundTruth, PseudoLabelMap};
use crate::shape::DatasetShape;

/// Which class of a selected pixel feeds statistics and distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    /// The revealed ground-truth class.
    #[default]
    GroundTruth,
    /// The pseudo label the model predicted when the pixel was picked.
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActiveLabel {
    pub true_class: ClassId,
    pub pseudo_class: ClassId,
    /// AL iteration (1-based) in which the pixel was selected.
    pub iteration: u32,
}

/// One labelled pixel, as persisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelRecord {
    pub image_index: u32,
    pub row: u32,
    pub col: u32,
    pub true_class: ClassId,
    pub pseudo_class: ClassId,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ImageLabels {
    mask: Vec<u64>,
    entries: BTreeMap<u32, ActiveLabel>,
}

impl ImageLabels {
    fn new(pixels: usize) -> Self {
        Self {
            mask: vec![0; pixels.div_ceil(64)],
            entries: BTreeMap::new(),
        }
    }

    #[inline]
    fn contains(&self, flat: u32) -> bool {
        let i = flat as usize;
        self.mask[i / 64] & (1 << (i % 64)) != 0
    }
}

/// Labelled pixels of the target set with a per-image bitmask for O(1) membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveLabelStore {
    shape: DatasetShape,
    images: Vec<ImageLabels>,
    len: u64,
}

impl ActiveLabelStore {
    pub fn new(shape: DatasetShape) -> Self {
        let pixels = shape.pixels_per_image() as usize;
        Self {
            shape,
            images: (0..shape.num_images())
                .map(|_| ImageLabels::new(pixels))
                .collect(),
            len: 0,
        }
    }

    pub fn shape(&self) -> &DatasetShape {
        &self.shape
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether the pixel at row-major index `flat` of `image_index` is labelled.
    #[inline]
    pub fn is_selected(&self, image_index: usize, flat: u32) -> bool {
        self.images[image_index].contains(flat)
    }

    pub fn contains(&self, image_index: usize, row: usize, col: usize) -> bool {
        self.is_selected(image_index, (row * self.shape.width() + col) as u32)
    }

    pub fn selected_in_image(&self, image_index: usize) -> u64 {
        self.images[image_index].entries.len() as u64
    }

    pub fn per_image_counts(&self) -> Vec<u64> {
        self.images.iter().map(|i| i.entries.len() as u64).collect()
    }

    pub fn get(&self, image_index: usize, row: usize, col: usize) -> Option<&ActiveLabel> {
        let flat = (row * self.shape.width() + col) as u32;
        self.images.get(image_index)?.entries.get(&flat)
    }

    pub fn insert(&mut self, record: LabelRecord) -> Result<()> {
        let (h, w) = (self.shape.height(), self.shape.width());
        let image = record.image_index as usize;
        if image >= self.shape.num_images() || record.row as usize >= h || record.col as usize >= w
        {
            return Err(Error::Shape(format!(
                "pixel ({}, {}, {}) outside {}x{}x{}",
                record.image_index,
                record.row,
                record.col,
                self.shape.num_images(),
                h,
                w
            )));
        }
        for class in [record.true_class, record.pseudo_class] {
            if usize::from(class) >= self.shape.num_classes() {
                return Err(Error::Class {
                    class: class.into(),
                    num_classes: self.shape.num_classes(),
                });
            }
        }
        let flat = record.row * w as u32 + record.col;
        let labels = &mut self.images[image];
        if labels.contains(flat) {
            return Err(Error::DuplicatePixel {
                image: record.image_index,
                row: record.row,
                col: record.col,
            });
        }
        labels.mask[flat as usize / 64] |= 1 << (flat % 64);
        labels.entries.insert(
            flat,
            ActiveLabel {
                true_class: record.true_class,
                pseudo_class: record.pseudo_class,
                iteration: record.iteration,
            },
        );
        self.len += 1;
        Ok(())
    }

    /// Labels a pixel from the ground truth, remembering the pseudo class it was picked under.
    pub fn label_from(
        &mut self,
        image_index: u32,
        flat: u32,
        ground_truth: &GroundTruth,
        pseudo: &PseudoLabelMap,
        iteration: u32,
    ) -> Result<()> {
        let w = self.shape.width() as u32;
        let gt = ground_truth.map(image_index as usize).as_slice();
        let (Some(&true_class), Some(&pseudo_class)) =
            (gt.get(flat as usize), pseudo.as_slice().get(flat as usize))
        else {
            return Err(Error::Shape(format!(
                "pixel {flat} outside image {image_index}"
            )));
        };
        self.insert(LabelRecord {
            image_index,
            row: flat / w,
            col: flat % w,
            true_class,
            pseudo_class,
            iteration,
        })
    }

    /// All records sorted by `(image_index, row, col)`.
    pub fn records(&self) -> impl Iterator<Item = LabelRecord> + '_ {
        let w = self.shape.width() as u32;
        self.images.iter().enumerate().flat_map(move |(i, labels)| {
            labels.entries.iter().map(move |(&flat, l)| LabelRecord {
                image_index: i as u32,
                row: flat / w,
                col: flat % w,
                true_class: l.true_class,
                pseudo_class: l.pseudo_class,
                iteration: l.iteration,
            })
        })
    }

    /// Per-class count of selected pixels.
    pub fn class_counts(&self, mode: CountMode) -> Vec<u64> {
        let mut counts = vec![0u64; self.shape.num_classes()];
        for labels in &self.images {
            for l in labels.entries.values() {
                let c = match mode {
                    CountMode::GroundTruth => l.true_class,
                    CountMode::Pseudo => l.pseudo_class,
                };
                counts[usize::from(c)] += 1;
            }
        }
        counts
    }
}
