//! TOML experiment config.
//!
//! ```toml
//! [scenario]
//! num_images = 20
//! height = 32
//! width = 32
//! class_frequencies = [0.6, 0.2, 0.1, 0.07, 0.03]
//! spatial_granularity = 4
//! noise_schedule = [0.8, 0.7, 0.6, 0.5, 0.4]
//! seed = 7
//!
//! [schedule]
//! budget_fraction = 0.05
//! iterations = 5            # optional, defaults to the noise schedule length
//! goal_distribution = [...] # optional, uniform by default
//! epsilon = 1e-6            # optional
//!
//! [run]                     # optional
//! strategy = "cbda"
//! heuristic = "entropy"
//! region_radius = 2
//! count_mode = "ground-truth"
//! histogram_bins = 20
//! ```
//!
//! The number of classes is the length of `class_frequencies`.

use std::path::Path;

use anyhow::Context;
use cbda_core::{BudgetSchedule64, CountMode, DatasetShape, Heuristic, ScenarioConfig, Strategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_images: usize,
    pub height: usize,
    pub width: usize,
    pub class_frequencies: Vec<f64>,
    pub spatial_granularity: usize,
    pub noise_schedule: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub budget_fraction: f64,
    pub iterations: Option<u32>,
    pub goal_distribution: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub strategy: String,
    pub heuristic: String,
    pub region_radius: usize,
    pub count_mode: CountMode,
    pub histogram_bins: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            strategy: "cbda".into(),
            heuristic: "entropy".into(),
            region_radius: 2,
            count_mode: CountMode::GroundTruth,
            histogram_bins: 20,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub strategy: Option<Strategy>,
    pub heuristic: Option<Heuristic>,
    pub budget: Option<f64>,
    pub iterations: Option<u32>,
    pub seed: Option<u64>,
}

/// Config after overrides and validation; this is what gets hashed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub budget_fraction: f64,
    pub iterations: u32,
    pub goal_distribution: Vec<f64>,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub heuristic: Heuristic,
    pub region_radius: usize,
    pub count_mode: CountMode,
    pub histogram_bins: usize,
}

pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

fn usage(field: &str, reason: impl std::fmt::Display) -> anyhow::Error {
    UsageError(format!("invalid `{field}`: {reason}")).into()
}

/// Qualifies a field name reported by the core library with its config section.
fn qualify(err: cbda_core::Error) -> anyhow::Error {
    match err {
        cbda_core::Error::Config { field, reason } => {
            let section = match field.as_str() {
                "class_frequencies" | "spatial_granularity" | "noise_schedule" | "num_classes" => {
                    "scenario"
                }
                "strategy" | "heuristic" => "run",
                _ => "schedule",
            };
            usage(&format!("{section}.{field}"), reason)
        }
        cbda_core::Error::Shape(reason) => usage("scenario", reason),
        other => other.into(),
    }
}

/// Linear resampling of a noise schedule to `n` points, keeping both endpoints.
pub fn resample(schedule: &[f64], n: usize) -> Vec<f64> {
    if schedule.len() == n || schedule.is_empty() {
        return schedule.to_vec();
    }
    if n == 1 || schedule.len() == 1 {
        return vec![schedule[0]; n];
    }
    let last = (schedule.len() - 1) as f64;
    (0..n)
        .map(|j| {
            let t = j as f64 * last / (n - 1) as f64;
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(schedule.len() - 1);
            let frac = t - lo as f64;
            schedule[lo] + (schedule[hi] - schedule[lo]) * frac
        })
        .collect()
}

impl ConfigFile {
    pub fn resolve(&self, o: &Overrides) -> anyhow::Result<Resolved> {
        let s = &self.scenario;
        let shape = DatasetShape::new(s.num_images, s.height, s.width, s.class_frequencies.len())
            .map_err(|e| usage("scenario", e))?;
        let iterations = o
            .iterations
            .or(self.schedule.iterations)
            .unwrap_or(s.noise_schedule.len() as u32);
        if iterations == 0 {
            return Err(usage("schedule.iterations", "must be at least 1"));
        }
        let scenario = ScenarioConfig {
            shape,
            class_frequencies: s.class_frequencies.clone(),
            spatial_granularity: s.spatial_granularity,
            noise_schedule: resample(&s.noise_schedule, iterations as usize),
            seed: o.seed.unwrap_or(s.seed),
        };
        scenario.validate().map_err(qualify)?;

        let strategy = match o.strategy {
            Some(x) => x,
            None => self.run.strategy.parse().map_err(qualify)?,
        };
        let heuristic = match o.heuristic {
            Some(x) => x,
            None => self.run.heuristic.parse().map_err(qualify)?,
        };
        if self.run.histogram_bins == 0 {
            return Err(usage("run.histogram_bins", "must be at least 1"));
        }
        let c = shape.num_classes();
        let resolved = Resolved {
            scenario,
            budget_fraction: o.budget.unwrap_or(self.schedule.budget_fraction),
            iterations,
            goal_distribution: self
                .schedule
                .goal_distribution
                .clone()
                .unwrap_or_else(|| vec![1.0 / c as f64; c]),
            epsilon: self
                .schedule
                .epsilon
                .unwrap_or(cbda_core::schedule::DEFAULT_EPSILON),
            strategy,
            heuristic,
            region_radius: self.run.region_radius,
            count_mode: self.run.count_mode,
            histogram_bins: self.run.histogram_bins,
        };
        if resolved.goal_distribution.len() != c {
            return Err(usage(
                "schedule.goal_distribution",
                format!(
                    "has {} entries for {c} classes",
                    resolved.goal_distribution.len()
                ),
            ));
        }
        resolved.schedule()?;
        Ok(resolved)
    }
}

impl Resolved {
    pub fn schedule(&self) -> anyhow::Result<BudgetSchedule64> {
        BudgetSchedule64::new(
            self.budget_fraction,
            self.iterations,
            self.goal_distribution.clone(),
            self.epsilon,
        )
        .map_err(qualify)
    }

    pub fn config_hash(&self) -> String {
        sha256_json(self)
    }

    pub fn scenario_hash(&self) -> String {
        scenario_hash(&self.scenario)
    }
}

pub fn scenario_hash(s: &ScenarioConfig) -> String {
    sha256_json(s)
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_config(path: &Path, o: &Overrides) -> anyhow::Result<Resolved> {
    load(path)?
        .resolve(o)
        .with_context(|| format!("config {}", path.display()))
}
