//! Synthetic stand-in for a segmentation training pipeline.
//!
//! Ground truth is a grid of square tiles whose classes are drawn from an
//! imbalanced frequency vector. A surrogate model predicts
//! `(1 - λ) * onehot(true) + λ * d` per pixel with `d` a seeded
//! Dirichlet(1) sample, so `λ` plays the role of how far the model is from
//! convergence at each AL round.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::ClassStats;
use crate::error::{Error, Result};
use crate::grid::{ClassId, GroundTruth, LabelMap, PseudoLabelMap};
use crate::heuristics::{pseudo_label, Heuristic, ProbabilityMap, ScoringInput};
use crate::metrics::{selected_fraction_variance, selection_histogram, ImbalanceReport};
use crate::scalar::Scalar;
use crate::schedule::BudgetSchedule;
use crate::selection::{
    commit, iteration_budget, run_cbda_iteration, select_dynamic, select_image_wise, select_region,
    BalanceOptions, Execution, PixelStrategy, ScoreStack, SelectionResult,
};
use crate::shape::DatasetShape;
use crate::store::{ActiveLabelStore, CountMode};

const FREQUENCY_TOLERANCE: f64 = 1e-9;

// stream tags for seed derivation
const STREAM_GROUND_TRUTH: u64 = 1;
const STREAM_SURROGATE: u64 = 2;
const STREAM_RANDOM_SCORES: u64 = 3;

/// SplitMix64 finaliser over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub shape: DatasetShape,
    pub class_frequencies: Vec<f64>,
    /// Side of the square tiles that share one class.
    pub spatial_granularity: usize,
    /// Surrogate noise level per AL iteration, non-increasing, each in `[0, 1]`.
    pub noise_schedule: Vec<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_frequencies.len() != self.shape.num_classes() {
            return Err(Error::config(
                "class_frequencies",
                format!(
                    "has {} entries for {} classes",
                    self.class_frequencies.len(),
                    self.shape.num_classes()
                ),
            ));
        }
        if self
            .class_frequencies
            .iter()
            .any(|f| !f.is_finite() || *f < 0.0)
        {
            return Err(Error::config(
                "class_frequencies",
                "entries must be finite and non-negative",
            ));
        }
        let sum: f64 = self.class_frequencies.iter().sum();
        if (sum - 1.0).abs() > FREQUENCY_TOLERANCE {
            return Err(Error::config(
                "class_frequencies",
                format!("must sum to 1 (got {sum})"),
            ));
        }
        let min_side = self.shape.height().min(self.shape.width());
        if self.spatial_granularity == 0 || self.spatial_granularity > min_side {
            return Err(Error::config(
                "spatial_granularity",
                format!("must lie in 1..={min_side}"),
            ));
        }
        if self.noise_schedule.is_empty() {
            return Err(Error::config(
                "noise_schedule",
                "needs one entry per AL iteration",
            ));
        }
        if self.noise_schedule.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config(
                "noise_schedule",
                "entries must lie in [0, 1]",
            ));
        }
        if self.noise_schedule.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("noise_schedule", "must be non-increasing"));
        }
        Ok(())
    }
}

/// Tiled ground truth, deterministic in the seed.
pub fn generate_ground_truth(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let sampler = WeightedIndex::new(&cfg.class_frequencies)
        .map_err(|e| Error::config("class_frequencies", e.to_string()))?;
    let (h, w, g) = (
        cfg.shape.height(),
        cfg.shape.width(),
        cfg.spatial_granularity,
    );
    let (tiles_down, tiles_across) = (h.div_ceil(g), w.div_ceil(g));
    let maps = (0..cfg.shape.num_images())
        .into_par_iter()
        .map(|image| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_GROUND_TRUTH, image as u64));
            let tiles: Vec<ClassId> = (0..tiles_down * tiles_across)
                .map(|_| sampler.sample(&mut rng) as ClassId)
                .collect();
            let labels = (0..h * w)
                .map(|p| tiles[(p / w / g) * tiles_across + (p % w) / g])
                .collect();
            LabelMap::from_trusted(image as u32, h, w, labels)
        })
        .collect();
    GroundTruth::new(cfg.shape, maps)
}

fn surrogate_image<T: Scalar>(
    truth: &LabelMap,
    num_classes: usize,
    lambda: T,
    seed: u64,
) -> ProbabilityMap<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::one() - lambda;
    let mut probs = Vec::with_capacity(truth.as_slice().len() * num_classes);
    let mut draw = vec![0.0f64; num_classes];
    for &class in truth.as_slice() {
        for d in draw.iter_mut() {
            *d = Exp1.sample(&mut rng);
        }
        let total: f64 = draw.iter().sum();
        let start = probs.len();
        probs.extend(draw.iter().map(|&d| lambda * T::of(d / total)));
        probs[start + usize::from(class)] = probs[start + usize::from(class)] + keep;
    }
    ProbabilityMap::new(
        truth.image_id(),
        truth.height(),
        truth.width(),
        num_classes,
        probs,
    )
    .expect("convex mix of simplex points is a simplex point")
}

/// Surrogate class probabilities for every image at noise level `lambda`.
pub fn surrogate_probabilities<T: Scalar>(
    gt: &GroundTruth,
    lambda: T,
    seed: u64,
) -> Result<Vec<ProbabilityMap<T>>> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::config("lambda", "must lie in [0, 1]"));
    }
    let c = gt.shape().num_classes();
    Ok(gt
        .maps()
        .par_iter()
        .enumerate()
        .map(|(i, m)| surrogate_image(m, c, lambda, derive_seed(seed, STREAM_SURROGATE, i as u64)))
        .collect())
}

/// Fraction of pixels whose pseudo label equals the ground truth.
pub fn pseudo_accuracy(gt: &GroundTruth, pseudo: &[PseudoLabelMap]) -> f64 {
    let hits: usize = gt
        .maps()
        .iter()
        .zip(pseudo)
        .map(|(t, p)| {
            t.as_slice()
                .iter()
                .zip(p.as_slice())
                .filter(|(a, b)| a == b)
                .count()
        })
        .sum();
    hits as f64 / gt.shape().total_pixels() as f64
}

/// Acquisition strategy of a full AL run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Whole images by mean score.
    Image,
    /// Equal per-image pixel budget.
    Ra,
    /// Global top-k over all images.
    Da,
    Cbra,
    Cbda,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Image,
        Strategy::Ra,
        Strategy::Da,
        Strategy::Cbra,
        Strategy::Cbda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Image => "image",
            Strategy::Ra => "ra",
            Strategy::Da => "da",
            Strategy::Cbra => "cbra",
            Strategy::Cbda => "cbda",
        }
    }

    pub fn is_balanced(self) -> bool {
        matches!(self, Strategy::Cbra | Strategy::Cbda)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|x| x.name()).collect();
                Error::config(
                    "strategy",
                    format!(
                        "unknown strategy `{s}`, expected one of {}",
                        names.join(", ")
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOptions<T> {
    pub region_radius: usize,
    pub count_mode: CountMode,
    /// Forces the class weights of balanced strategies.
    pub pinned_weights: Option<Vec<T>>,
    pub execution: Execution,
    pub histogram_bins: usize,
}

impl<T> Default for LoopOptions<T> {
    fn default() -> Self {
        Self {
            region_radius: 2,
            count_mode: CountMode::GroundTruth,
            pinned_weights: None,
            execution: Execution::Parallel,
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub noise_level: f64,
    pub pseudo_accuracy: f64,
    /// Pixels requested this iteration.
    pub budget: u64,
    pub picked: u64,
    pub shortfall: u64,
    pub per_image_counts: Vec<u64>,
    /// Cumulative ground-truth class counts after the iteration.
    pub class_counts: Vec<u64>,
    /// Class weights applied, balanced strategies only.
    pub weights: Option<Vec<f64>>,
    /// `None` while the label set is still empty.
    pub imbalance_score: Option<f64>,
    pub histogram: Vec<u64>,
    pub fraction_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub strategy: Strategy,
    pub heuristic: Heuristic,
    pub noise_schedule: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
}

impl LoopReport {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub report: LoopReport,
    pub store: ActiveLabelStore,
}

/// Generates the ground truth and runs the AL loop on it.
pub fn run_loop<T: Scalar>(
    cfg: &ScenarioConfig,
    sched: &BudgetSchedule<T>,
    strategy: Strategy,
    heuristic: Heuristic,
    options: &LoopOptions<T>,
) -> Result<LoopOutcome> {
    let gt = generate_ground_truth(cfg)?;
    run_loop_on(&gt, cfg, sched, strategy, heuristic, options)
}

fn score_stack<T: Scalar>(
    gt: &GroundTruth,
    lambda: T,
    surrogate_seed: u64,
    random_seed: u64,
    heuristic: Heuristic,
    radius: usize,
) -> Result<(ScoreStack<T>, f64)> {
    let probs = surrogate_probabilities(gt, lambda, surrogate_seed)?;
    let layers = probs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let pseudo = pseudo_label(p);
            let scores = heuristic.score(&ScoringInput {
                probs: p,
                pseudo: &pseudo,
                region_radius: radius,
                seed: derive_seed(random_seed, STREAM_RANDOM_SCORES, i as u64),
            })?;
            Ok((scores, pseudo))
        })
        .collect::<Result<Vec<_>>>()?;
    let pseudo: Vec<_> = layers.iter().map(|(_, p)| p.clone()).collect();
    let accuracy = pseudo_accuracy(gt, &pseudo);
    Ok((ScoreStack::new(layers)?, accuracy))
}

/// Runs every AL iteration of `sched` on an existing ground truth.
pub fn run_loop_on<T: Scalar>(
    gt: &GroundTruth,
    cfg: &ScenarioConfig,
    sched: &BudgetSchedule<T>,
    strategy: Strategy,
    heuristic: Heuristic,
    options: &LoopOptions<T>,
) -> Result<LoopOutcome> {
    cfg.validate()?;
    let shape = *gt.shape();
    if shape != cfg.shape {
        return Err(Error::Shape(
            "ground truth does not match the scenario shape".into(),
        ));
    }
    if cfg.noise_schedule.len() != sched.num_al_iterations() as usize {
        return Err(Error::config(
            "noise_schedule",
            format!(
                "has {} entries for {} AL iterations",
                cfg.noise_schedule.len(),
                sched.num_al_iterations()
            ),
        ));
    }
    if sched.num_classes() != shape.num_classes() {
        return Err(Error::config(
            "goal_distribution",
            format!(
                "has {} entries for {} classes",
                sched.num_classes(),
                shape.num_classes()
            ),
        ));
    }

    let mut store = ActiveLabelStore::new(shape);
    let mut stats = ClassStats::gather(&store, options.count_mode, 1);
    let balance = BalanceOptions {
        count_mode: options.count_mode,
        pinned_weights: options.pinned_weights.clone(),
        execution: options.execution,
    };
    let mut iterations = Vec::with_capacity(cfg.noise_schedule.len());

    for (iteration, &lambda) in (1u32..).zip(&cfg.noise_schedule) {
        let (stack, accuracy) = score_stack(
            gt,
            T::of(lambda),
            derive_seed(cfg.seed, STREAM_SURROGATE, u64::from(iteration)),
            derive_seed(cfg.seed, STREAM_RANDOM_SCORES, u64::from(iteration)),
            heuristic,
            options.region_radius,
        )?;

        let budget = iteration_budget(&shape, sched, iteration, store.len())?;
        let mut weights = None;
        let selection: SelectionResult = match strategy {
            Strategy::Image => {
                let ppi = shape.pixels_per_image();
                let open = (0..shape.num_images())
                    .filter(|&i| store.selected_in_image(i) < ppi)
                    .count() as u64;
                let images = (budget / ppi).min(open);
                let sel = select_image_wise(&stack, images as usize, &store)?;
                commit(&mut store, &sel, &stack, gt, iteration, options.count_mode)?;
                SelectionResult {
                    requested: budget,
                    ..sel
                }
            }
            Strategy::Ra => {
                let sel = select_region(
                    &stack,
                    (budget / shape.num_images() as u64) as usize,
                    &store,
                    options.execution,
                )?;
                commit(&mut store, &sel, &stack, gt, iteration, options.count_mode)?;
                sel
            }
            Strategy::Da => {
                let sel = select_dynamic(&stack, budget as usize, &store, options.execution)?;
                commit(&mut store, &sel, &stack, gt, iteration, options.count_mode)?;
                sel
            }
            Strategy::Cbra | Strategy::Cbda => {
                let pixel = if strategy == Strategy::Cbda {
                    PixelStrategy::Dynamic
                } else {
                    PixelStrategy::Region
                };
                let out = run_cbda_iteration(
                    &stack, &shape, sched, iteration, &mut stats, &mut store, gt, pixel, &balance,
                )?;
                weights = Some(out.weights.iter().map(|w| w.to_f64_lossy()).collect());
                out.selection
            }
        };

        let class_counts = store.class_counts(CountMode::GroundTruth);
        let imbalance_score = match ImbalanceReport::<f64>::from_counts(&class_counts) {
            Ok(r) => Some(r.imbalance_score),
            Err(Error::EmptySelection) => None,
            // a single-class scenario has no imbalance to speak of
            Err(Error::Class { .. }) => None,
            Err(e) => return Err(e),
        };
        iterations.push(IterationRecord {
            iteration,
            noise_level: lambda,
            pseudo_accuracy: accuracy,
            budget: selection.requested,
            picked: selection.iteration_budget_used(),
            shortfall: selection.shortfall(),
            per_image_counts: selection.per_image_counts,
            class_counts,
            weights,
            imbalance_score,
            histogram: selection_histogram(&store, options.histogram_bins)?.counts,
            fraction_variance: selected_fraction_variance(&store),
        });
    }

    Ok(LoopOutcome {
        report: LoopReport {
            strategy,
            heuristic,
            noise_schedule: cfg.noise_schedule.clone(),
            iterations,
        },
        store,
    })
}
