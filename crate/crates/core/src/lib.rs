//! Class-balanced pixel selection for active learning on segmentation grids.
//!
//! Generic over the score type through [`Scalar`]; the `*64` and `*32`
//! aliases below fix it to `f64` or `f32`.

pub mod balance;
pub mod error;
pub mod grid;
pub mod heuristics;
pub mod metrics;
pub mod persist;
pub mod scalar;
pub mod scenario;
pub mod schedule;
pub mod selection;
pub mod shape;
pub mod store;

pub use balance::{apply_weights, class_budget, class_weight, ClassStats};
pub use error::{Error, Result};
pub use grid::{ClassId, GroundTruth, ImageId, LabelMap, PseudoLabelMap, ScoreMatrix};
pub use heuristics::{Heuristic, ProbabilityMap};
pub use metrics::{
    class_distribution, imbalance_score, selection_histogram, ClassDistribution, ImbalanceReport,
    SelectionHistogram,
};
pub use scalar::Scalar;
pub use scenario::{run_loop, LoopOptions, LoopOutcome, LoopReport, ScenarioConfig, Strategy};
pub use schedule::BudgetSchedule;
pub use selection::{
    commit, iteration_budget, select_dynamic, select_image_wise, select_region, Execution,
    PixelRef, ScoreStack, SelectionResult,
};
pub use selection::{run_cbda_iteration, BalanceOptions, CbdaOutcome, PixelStrategy};
pub use shape::DatasetShape;
pub use store::{ActiveLabelStore, CountMode, LabelRecord};

pub type ScoreMatrix64 = ScoreMatrix<f64>;
pub type ScoreMatrix32 = ScoreMatrix<f32>;
pub type ScoreStack64 = ScoreStack<f64>;
pub type ScoreStack32 = ScoreStack<f32>;
pub type BudgetSchedule64 = BudgetSchedule<f64>;
pub type BudgetSchedule32 = BudgetSchedule<f32>;
pub type ProbabilityMap64 = ProbabilityMap<f64>;
pub type ProbabilityMap32 = ProbabilityMap<f32>;
pub type ClassDistribution64 = ClassDistribution<f64>;
pub type ClassDistribution32 = ClassDistribution<f32>;
pub type ImbalanceReport64 = ImbalanceReport<f64>;
pub type ImbalanceReport32 = ImbalanceReport<f32>;
