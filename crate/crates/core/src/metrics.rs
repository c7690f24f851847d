//! Balance and spread of an active label: class distribution, normalised
//! KL imbalance score and the per-image selected-fraction histogram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::{ActiveLabelStore, CountMode};

const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Class proportions of a non-empty label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution<T> {
    proportions: Vec<T>,
}

impl<T: Scalar> ClassDistribution<T> {
    pub fn new(proportions: Vec<T>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(Error::config("proportions", "need at least one class"));
        }
        if proportions.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::config(
                "proportions",
                "entries must be finite and non-negative",
            ));
        }
        let sum: f64 = proportions.iter().map(|p| p.to_f64_lossy()).sum();
        let tolerance = DISTRIBUTION_TOLERANCE
            .max(4.0 * T::epsilon().to_f64_lossy() * proportions.len() as f64);
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::config(
                "proportions",
                format!("must sum to 1 (got {sum})"),
            ));
        }
        Ok(Self { proportions })
    }

    /// Normalises counts; an all-zero count vector is an empty selection.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptySelection);
        }
        let total = T::of(total as f64);
        Self::new(counts.iter().map(|&c| T::of(c as f64) / total).collect())
    }

    pub fn proportions(&self) -> &[T] {
        &self.proportions
    }

    pub fn num_classes(&self) -> usize {
        self.proportions.len()
    }

    /// `KL(Q || uniform)` in nats, with `0 ln 0 = 0`.
    pub fn kl_to_uniform(&self) -> T {
        let c = T::of(self.proportions.len() as f64);
        let kl = self
            .proportions
            .iter()
            .filter(|&&q| q > T::zero())
            .fold(T::zero(), |acc, &q| acc + q * (q * c).ln());
        kl.max(T::zero())
    }
}

/// Class distribution of the selected pixels.
pub fn class_distribution<T: Scalar>(
    store: &ActiveLabelStore,
    num_classes: usize,
    mode: CountMode,
) -> Result<ClassDistribution<T>> {
    if num_classes != store.shape().num_classes() {
        return Err(Error::ClassCount(format!(
            "store has {} classes, asked for {num_classes}",
            store.shape().num_classes()
        )));
    }
    ClassDistribution::from_counts(&store.class_counts(mode))
}

/// `KL(Q || uniform) / KL(one-hot || uniform)`; the denominator is `ln C`.
/// 0 for a perfectly balanced label set, 1 for a single-class one.
pub fn imbalance_score<T: Scalar>(dist: &ClassDistribution<T>) -> Result<T> {
    let c = dist.num_classes();
    if c < 2 {
        return Err(Error::Class {
            class: c,
            num_classes: 2,
        });
    }
    let max_kl = T::of(c as f64).ln();
    Ok((dist.kl_to_uniform() / max_kl).min(T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport<T> {
    pub imbalance_score: T,
    pub per_class_counts: Vec<u64>,
    /// Nats.
    pub kl_to_uniform: T,
}

impl<T: Scalar> ImbalanceReport<T> {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let dist = ClassDistribution::<T>::from_counts(counts)?;
        Ok(Self {
            imbalance_score: imbalance_score(&dist)?,
            per_class_counts: counts.to_vec(),
            kl_to_uniform: dist.kl_to_uniform(),
        })
    }

    pub fn from_store(store: &ActiveLabelStore, mode: CountMode) -> Result<Self> {
        Self::from_counts(&store.class_counts(mode))
    }
}

/// Largest over smallest class count; `None` when some class has no pixels.
pub fn max_min_ratio(counts: &[u64]) -> Option<f64> {
    let min = *counts.iter().min()?;
    let max = *counts.iter().max()?;
    (min > 0).then(|| max as f64 / min as f64)
}

/// Histogram of the fraction of pixels selected in each image.
///
/// Bins split `[0, 1]` evenly and are closed on the right, except the
/// first which also holds 0: `[0, 1/n], (1/n, 2/n], ..., ((n-1)/n, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionHistogram {
    pub counts: Vec<u64>,
}

impl SelectionHistogram {
    pub fn from_image_counts(
        per_image_selected: &[u64],
        pixels_per_image: u64,
        num_bins: usize,
    ) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::config("num_bins", "must be at least 1"));
        }
        if pixels_per_image == 0 {
            return Err(Error::Shape("images must have pixels".into()));
        }
        let bins = num_bins as u128;
        let pixels = u128::from(pixels_per_image);
        let mut counts = vec![0u64; num_bins];
        for &selected in per_image_selected {
            let selected = u128::from(selected.min(pixels_per_image));
            // ceil(fraction * bins) - 1 in integers, with 0 in the first bin
            let bin = (selected * bins).div_ceil(pixels).saturating_sub(1);
            counts[bin as usize] += 1;
        }
        Ok(Self { counts })
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    /// `(lower, upper)` fraction edges of bin `i`.
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let n = self.counts.len() as f64;
        (i as f64 / n, (i + 1) as f64 / n)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn selection_histogram(
    store: &ActiveLabelStore,
    num_bins: usize,
) -> Result<SelectionHistogram> {
    SelectionHistogram::from_image_counts(
        &store.per_image_counts(),
        store.shape().pixels_per_image(),
        num_bins,
    )
}

/// Population variance of the per-image selected fractions.
pub fn selected_fraction_variance(store: &ActiveLabelStore) -> f64 {
    let pixels = store.shape().pixels_per_image() as f64;
    let fractions: Vec<f64> = store
        .per_image_counts()
        .iter()
        .map(|&c| c as f64 / pixels)
        .collect();
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    fractions
        .iter()
        .map(|f| (f - mean) * (f - mean))
        .sum::<f64>()
        / n
}
