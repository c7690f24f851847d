//! Acquisition procedures: image-wise, per-image (region) and dynamic
//! (global top-k over the stacked score tensor), plus the class-balanced
//! iteration driver.
//!
//! Selection functions are pure: they read the store only to skip pixels
//! that are already labelled. [`commit`] writes a result back.

mod balanced;
pub mod topk;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GroundTruth, PseudoLabelMap, ScoreMatrix};
use crate::scalar::Scalar;
use crate::schedule::BudgetSchedule;
use crate::shape::DatasetShape;
use crate::store::{ActiveLabelStore, CountMode};
use topk::{Candidate, TopK};

pub use balanced::{run_cbda_iteration, BalanceOptions, CbdaOutcome, PixelStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelRef {
    pub image_index: u32,
    pub row: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Picked pixels. Pixel-wise strategies list them best first.
    pub picked: Vec<PixelRef>,
    /// Pixels asked for.
    pub requested: u64,
    pub per_image_counts: Vec<u64>,
}

impl SelectionResult {
    fn from_candidates<T>(
        candidates: Vec<Candidate<T>>,
        requested: u64,
        num_images: usize,
        width: usize,
    ) -> Self {
        let mut per_image_counts = vec![0u64; num_images];
        let picked = candidates
            .into_iter()
            .map(|c| {
                per_image_counts[c.image as usize] += 1;
                PixelRef {
                    image_index: c.image,
                    row: c.pixel / width as u32,
                    col: c.pixel % width as u32,
                }
            })
            .collect();
        Self {
            picked,
            requested,
            per_image_counts,
        }
    }

    pub fn iteration_budget_used(&self) -> u64 {
        self.picked.len() as u64
    }

    /// Requested pixels that could not be picked for lack of eligible ones.
    pub fn shortfall(&self) -> u64 {
        self.requested.saturating_sub(self.iteration_budget_used())
    }
}

/// Whether per-image work is spread over the rayon pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackLayer<T> {
    pub scores: ScoreMatrix<T>,
    pub pseudo: PseudoLabelMap,
}

/// Score matrices and pseudo labels of the whole target set, ordered by image index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStack<T> {
    height: usize,
    width: usize,
    layers: Vec<StackLayer<T>>,
}

impl<T: Scalar> ScoreStack<T> {
    pub fn new(layers: Vec<(ScoreMatrix<T>, PseudoLabelMap)>) -> Result<Self> {
        let Some((first, _)) = layers.first() else {
            return Err(Error::Shape("score stack needs at least one image".into()));
        };
        let (height, width) = (first.height(), first.width());
        let mut ids = std::collections::HashSet::with_capacity(layers.len());
        let layers = layers
            .into_iter()
            .map(|(scores, pseudo)| {
                if scores.height() != height || scores.width() != width {
                    return Err(Error::Shape(format!(
                        "image {} is {}x{}, stack is {height}x{width}",
                        scores.image_id(),
                        scores.height(),
                        scores.width()
                    )));
                }
                if !pseudo.same_grid(&scores) {
                    return Err(Error::Shape(format!(
                        "pseudo labels do not match scores of image {}",
                        scores.image_id()
                    )));
                }
                if !ids.insert(scores.image_id()) {
                    return Err(Error::Shape(format!(
                        "duplicate image id {}",
                        scores.image_id()
                    )));
                }
                Ok(StackLayer { scores, pseudo })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height,
            width,
            layers,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[StackLayer<T>] {
        &self.layers
    }

    /// Same stack with every score scaled by its pseudo class weight.
    pub fn weighted(&self, weights: &[T]) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(StackLayer {
                    scores: crate::balance::apply_weights(&l.scores, &l.pseudo, weights)?,
                    pseudo: l.pseudo.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            height: self.height,
            width: self.width,
            layers,
        })
    }

    fn check_store(&self, store: &ActiveLabelStore) -> Result<()> {
        let s = store.shape();
        if s.num_images() != self.len() || s.height() != self.height || s.width() != self.width {
            return Err(Error::Shape(format!(
                "store covers {}x{}x{}, stack is {}x{}x{}",
                s.num_images(),
                s.height(),
                s.width(),
                self.len(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    fn eligible<'a>(
        &'a self,
        image: usize,
        store: &'a ActiveLabelStore,
    ) -> impl Iterator<Item = Candidate<T>> + 'a {
        self.layers[image]
            .scores
            .as_slice()
            .iter()
            .enumerate()
            .filter(move |(p, _)| !store.is_selected(image, *p as u32))
            .map(move |(p, &score)| Candidate {
                score,
                image: image as u32,
                pixel: p as u32,
            })
    }
}

/// Pixels to pick at `iteration` so the cumulative total tracks
/// `floor(total_pixels * budget_fraction * iteration / N)`.
pub fn iteration_budget<T: Scalar>(
    shape: &DatasetShape,
    sched: &BudgetSchedule<T>,
    iteration: u32,
    already_selected: u64,
) -> Result<u64> {
    sched.check_iteration(iteration)?;
    Ok(cumulative_target(shape, sched, iteration).saturating_sub(already_selected))
}

/// `floor(total * fraction * i / N)`, snapping values that sit within rounding
/// error of an integer so that e.g. `0.05 * 640000` is not floored to 31999.
pub fn cumulative_target<T: Scalar>(
    shape: &DatasetShape,
    sched: &BudgetSchedule<T>,
    iteration: u32,
) -> u64 {
    let exact =
        shape.total_pixels() as f64 * sched.budget_fraction().to_f64_lossy() * f64::from(iteration)
            / f64::from(sched.num_al_iterations());
    let nearest = exact.round();
    let tolerance = 1e-9 + exact * 4.0 * T::epsilon().to_f64_lossy();
    let target = if (exact - nearest).abs() <= tolerance {
        nearest
    } else {
        exact.floor()
    };
    target.max(0.0) as u64
}

/// Labels whole images: the `budget_images` images with the highest mean
/// score among those that still have unlabelled pixels. Every unlabelled
/// pixel of a picked image is selected.
pub fn select_image_wise<T: Scalar>(
    stack: &ScoreStack<T>,
    budget_images: usize,
    store: &ActiveLabelStore,
) -> Result<SelectionResult> {
    stack.check_store(store)?;
    let pixels = stack.height * stack.width;
    let candidates = stack
        .layers
        .iter()
        .enumerate()
        .filter(|(i, _)| (store.selected_in_image(*i) as usize) < pixels)
        .map(|(i, l)| Candidate {
            score: l.scores.mean(),
            image: i as u32,
            pixel: 0,
        });
    let available = candidates.clone().count();
    if budget_images > available {
        return Err(Error::Budget {
            requested: budget_images as u64,
            available: available as u64,
        });
    }
    let images = topk::top_k(candidates, budget_images);

    let mut per_image_counts = vec![0u64; stack.len()];
    let mut picked = Vec::new();
    for img in images {
        let i = img.image as usize;
        for p in 0..pixels as u32 {
            if !store.is_selected(i, p) {
                picked.push(PixelRef {
                    image_index: img.image,
                    row: p / stack.width as u32,
                    col: p % stack.width as u32,
                });
                per_image_counts[i] += 1;
            }
        }
    }
    let requested = picked.len() as u64;
    Ok(SelectionResult {
        picked,
        requested,
        per_image_counts,
    })
}

/// Picks the top `per_image_budget` unlabelled pixels of every image independently.
pub fn select_region<T: Scalar>(
    stack: &ScoreStack<T>,
    per_image_budget: usize,
    store: &ActiveLabelStore,
    execution: Execution,
) -> Result<SelectionResult> {
    stack.check_store(store)?;
    let per_image = |i: usize| {
        let mut top = TopK::new(per_image_budget);
        top.extend(stack.eligible(i, store));
        top.into_sorted_vec()
    };
    let chunks: Vec<Vec<Candidate<T>>> = match execution {
        Execution::Serial => (0..stack.len()).map(per_image).collect(),
        Execution::Parallel => (0..stack.len()).into_par_iter().map(per_image).collect(),
    };
    let candidates = chunks.into_iter().flatten().collect();
    let requested = (per_image_budget as u64) * stack.len() as u64;
    Ok(SelectionResult::from_candidates(
        candidates,
        requested,
        stack.len(),
        stack.width,
    ))
}

/// Picks the `budget` best unlabelled pixels across all images at once.
pub fn select_dynamic<T: Scalar>(
    stack: &ScoreStack<T>,
    budget: usize,
    store: &ActiveLabelStore,
    execution: Execution,
) -> Result<SelectionResult> {
    stack.check_store(store)?;
    let candidates = match execution {
        Execution::Serial => {
            let mut top = TopK::new(budget);
            for i in 0..stack.len() {
                top.extend(stack.eligible(i, store));
            }
            top.into_sorted_vec()
        }
        Execution::Parallel => {
            // per-image partial top-k, merged in image order
            let partial: Vec<Vec<Candidate<T>>> = (0..stack.len())
                .into_par_iter()
                .map(|i| {
                    let mut top = TopK::new(budget);
                    top.extend(stack.eligible(i, store));
                    top.into_sorted_vec()
                })
                .collect();
            topk::top_k(partial.into_iter().flatten(), budget)
        }
    };
    Ok(SelectionResult::from_candidates(
        candidates,
        budget as u64,
        stack.len(),
        stack.width,
    ))
}

/// Appends the picks to `store` with their ground-truth classes and returns
/// the number of added pixels per class under `mode`.
pub fn commit<T: Scalar>(
    store: &mut ActiveLabelStore,
    selection: &SelectionResult,
    stack: &ScoreStack<T>,
    ground_truth: &GroundTruth,
    iteration: u32,
    mode: CountMode,
) -> Result<Vec<u64>> {
    stack.check_store(store)?;
    if ground_truth.shape() != store.shape() {
        return Err(Error::Shape("ground truth does not match the store".into()));
    }
    let mut added = vec![0u64; store.shape().num_classes()];
    for p in &selection.picked {
        let flat = p.row * stack.width as u32 + p.col;
        let pseudo = &stack.layers[p.image_index as usize].pseudo;
        store.label_from(p.image_index, flat, ground_truth, pseudo, iteration)?;
        let class = match mode {
            CountMode::GroundTruth => {
                ground_truth.map(p.image_index as usize).as_slice()[flat as usize]
            }
            CountMode::Pseudo => pseudo.as_slice()[flat as usize],
        };
        added[usize::from(class)] += 1;
    }
    Ok(added)
}
