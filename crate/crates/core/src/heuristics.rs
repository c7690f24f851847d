//! Pixel scoring functions. Every heuristic yields finite, non-negative scores.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ClassId, ImageId, PseudoLabelMap, ScoreMatrix};
use crate::scalar::Scalar;

const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Class probabilities of one image, laid out pixel-major: `probs[(r * W + c) * C + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap<T> {
    image_id: ImageId,
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<T>,
}

impl<T: Scalar> ProbabilityMap<T> {
    pub fn new(
        image_id: ImageId,
        height: usize,
        width: usize,
        num_classes: usize,
        probs: Vec<T>,
    ) -> Result<Self> {
        if num_classes == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(
                "probability map dimensions must be positive".into(),
            ));
        }
        if probs.len() != height * width * num_classes {
            return Err(Error::Shape(format!(
                "expected {height}x{width}x{num_classes} probabilities, got {}",
                probs.len()
            )));
        }
        let tolerance =
            SIMPLEX_TOLERANCE.max(T::epsilon().to_f64_lossy() * 4.0 * num_classes as f64);
        for (index, px) in probs.chunks_exact(num_classes).enumerate() {
            if px.iter().any(|p| !p.is_finite() || *p < T::zero()) {
                return Err(Error::InvalidProbabilities {
                    index,
                    reason: "entries must be finite and non-negative".into(),
                });
            }
            let sum: f64 = px.iter().map(|p| p.to_f64_lossy()).sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(Error::InvalidProbabilities {
                    index,
                    reason: format!("sums to {sum}"),
                });
            }
        }
        Ok(Self {
            image_id,
            height,
            width,
            num_classes,
            probs,
        })
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.num_classes;
        &self.probs[start..start + self.num_classes]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, T> {
        self.probs.chunks_exact(self.num_classes)
    }

    fn score_with(&self, f: impl Fn(&[T]) -> T) -> ScoreMatrix<T> {
        let scores = self.pixels().map(f).collect();
        ScoreMatrix::from_trusted(self.image_id, self.height, self.width, scores)
    }
}

/// Per-pixel argmax; ties go to the lowest class id.
pub fn pseudo_label<T: Scalar>(probs: &ProbabilityMap<T>) -> PseudoLabelMap {
    let labels = probs
        .pixels()
        .map(|px| {
            let mut best = 0;
            for (k, &p) in px.iter().enumerate().skip(1) {
                if p > px[best] {
                    best = k;
                }
            }
            best as ClassId
        })
        .collect();
    PseudoLabelMap::from_trusted(probs.image_id, probs.height, probs.width, labels)
}

fn entropy<T: Scalar>(px: &[T]) -> T {
    let h = px
        .iter()
        .filter(|&&p| p > T::zero())
        .fold(T::zero(), |acc, &p| acc - p * p.ln());
    // rounding can leave a one-hot pixel at -0.0 or a hair below zero
    h.max(T::zero())
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn score_entropy<T: Scalar>(probs: &ProbabilityMap<T>) -> ScoreMatrix<T> {
    probs.score_with(entropy)
}

/// `1 - (p_top1 - p_top2)`: 0 for a confident pixel, 1 for a tie at the top.
pub fn score_margin<T: Scalar>(probs: &ProbabilityMap<T>) -> Result<ScoreMatrix<T>> {
    if probs.num_classes < 2 {
        return Err(Error::Class {
            class: probs.num_classes,
            num_classes: 2,
        });
    }
    Ok(probs.score_with(|px| {
        let (mut first, mut second) = (T::neg_infinity(), T::neg_infinity());
        for &p in px {
            if p > first {
                second = first;
                first = p;
            } else if p > second {
                second = p;
            }
        }
        (T::one() - (first - second)).max(T::zero()).min(T::one())
    }))
}

/// Entropy of the class histogram over the `(2r+1)^2` window around each
/// pixel, clipped at the image border.
///
/// A neighbourhood-diversity stand-in; not the region impurity score of any
/// particular published method.
pub fn score_region_impurity<T: Scalar>(
    pseudo: &PseudoLabelMap,
    radius: usize,
    num_classes: usize,
) -> Result<ScoreMatrix<T>> {
    if radius == 0 {
        return Err(Error::config("radius", "must be at least 1"));
    }
    let (h, w) = (pseudo.height(), pseudo.width());
    if let Some(&bad) = pseudo
        .as_slice()
        .iter()
        .find(|&&c| usize::from(c) >= num_classes)
    {
        return Err(Error::Class {
            class: bad.into(),
            num_classes,
        });
    }
    // per-class summed-area tables, (h+1) x (w+1) each
    let stride = w + 1;
    let mut tables = vec![0u32; num_classes * (h + 1) * stride];
    for c in 0..num_classes {
        let t = &mut tables[c * (h + 1) * stride..(c + 1) * (h + 1) * stride];
        for r in 0..h {
            let mut run = 0u32;
            for col in 0..w {
                run += u32::from(usize::from(pseudo.get(r, col)) == c);
                t[(r + 1) * stride + col + 1] = t[r * stride + col + 1] + run;
            }
        }
    }
    let mut scores = Vec::with_capacity(h * w);
    let mut counts = vec![0u32; num_classes];
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
        for col in 0..w {
            let (c0, c1) = (col.saturating_sub(radius), (col + radius + 1).min(w));
            for (c, count) in counts.iter_mut().enumerate() {
                let t = &tables[c * (h + 1) * stride..];
                *count = t[r1 * stride + c1] + t[r0 * stride + c0]
                    - t[r0 * stride + c1]
                    - t[r1 * stride + c0];
            }
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            let h_nats = counts
                .iter()
                .filter(|&&k| k > 0)
                .map(|&k| {
                    let p = f64::from(k) / n;
                    -p * p.ln()
                })
                .sum::<f64>();
            scores.push(T::of(h_nats.max(0.0)));
        }
    }
    Ok(ScoreMatrix::from_trusted(pseudo.image_id(), h, w, scores))
}

/// Uniform `[0, 1)` scores from a seeded generator; a null baseline.
pub fn score_random<T: Scalar>(
    image_id: ImageId,
    height: usize,
    width: usize,
    seed: u64,
) -> ScoreMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..height * width)
        .map(|_| T::of(rng.random::<f64>()))
        .collect();
    ScoreMatrix::from_trusted(image_id, height, width, scores)
}

/// Heuristic selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    Entropy,
    Margin,
    RegionImpurity,
    Random,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::Entropy,
        Heuristic::Margin,
        Heuristic::RegionImpurity,
        Heuristic::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Entropy => "entropy",
            Heuristic::Margin => "margin",
            Heuristic::RegionImpurity => "region-impurity",
            Heuristic::Random => "random",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Heuristic::ALL.iter().map(|h| h.name()).collect();
                Error::config(
                    "heuristic",
                    format!(
                        "unknown heuristic `{s}`, expected one of {}",
                        names.join(", ")
                    ),
                )
            })
    }
}

/// Inputs a heuristic may need for one image.
pub struct ScoringInput<'a, T> {
    pub probs: &'a ProbabilityMap<T>,
    pub pseudo: &'a PseudoLabelMap,
    pub region_radius: usize,
    pub seed: u64,
}

impl Heuristic {
    pub fn score<T: Scalar>(self, input: &ScoringInput<'_, T>) -> Result<ScoreMatrix<T>> {
        let p = input.probs;
        match self {
            Heuristic::Entropy => Ok(score_entropy(p)),
            Heuristic::Margin => score_margin(p),
            Heuristic::RegionImpurity => {
                score_region_impurity(input.pseudo, input.region_radius, p.num_classes())
            }
            Heuristic::Random => Ok(score_random(
                p.image_id(),
                p.height(),
                p.width(),
                input.seed,
            )),
        }
    }
}
