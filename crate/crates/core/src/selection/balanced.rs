use serde::{Deserialize, Serialize};

use super::{
    commit, iteration_budget, select_dynamic, select_region, Execution, ScoreStack, SelectionResult,
};
use crate::balance::ClassStats;
use crate::error::{Error, Result};
use crate::grid::GroundTruth;
use crate::scalar::Scalar;
use crate::schedule::BudgetSchedule;
use crate::shape::DatasetShape;
use crate::store::{ActiveLabelStore, CountMode};

/// How the weighted scores are turned into picks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelStrategy {
    /// Equal per-image budget (CBRA).
    Region,
    /// Global top-k over the stacked scores (CBDA).
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOptions<T> {
    pub count_mode: CountMode,
    /// Replaces the computed class weights; all ones reproduces the unweighted strategy.
    pub pinned_weights: Option<Vec<T>>,
    pub execution: Execution,
}

impl<T> Default for BalanceOptions<T> {
    fn default() -> Self {
        Self {
            count_mode: CountMode::GroundTruth,
            pinned_weights: None,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbdaOutcome<T> {
    pub selection: SelectionResult,
    /// Class weights the scores were multiplied by.
    pub weights: Vec<T>,
    /// Pixel budget of this iteration.
    pub budget: u64,
}

/// One class-balanced AL iteration: recount the store, derive class
/// weights, weight the scores by pseudo class, select, then record the picks
/// with their ground-truth classes. `stats` must describe `store` exactly and
/// is advanced to the next iteration on success.
#[allow(clippy::too_many_arguments)]
pub fn run_cbda_iteration<T: Scalar>(
    stack: &ScoreStack<T>,
    shape: &DatasetShape,
    sched: &BudgetSchedule<T>,
    iteration: u32,
    stats: &mut ClassStats,
    store: &mut ActiveLabelStore,
    ground_truth: &GroundTruth,
    strategy: PixelStrategy,
    options: &BalanceOptions<T>,
) -> Result<CbdaOutcome<T>> {
    sched.check_iteration(iteration)?;
    if store.shape() != shape || ground_truth.shape() != shape {
        return Err(Error::Shape(
            "store, ground truth and dataset shape disagree".into(),
        ));
    }
    if sched.num_classes() != shape.num_classes() {
        return Err(Error::ClassCount(format!(
            "schedule has {} goal entries for {} classes",
            sched.num_classes(),
            shape.num_classes()
        )));
    }
    if stats.iteration_index() != iteration {
        return Err(Error::Consistency(format!(
            "statistics prepared for iteration {}, running iteration {iteration}",
            stats.iteration_index()
        )));
    }
    let recount = ClassStats::gather(store, options.count_mode, iteration);
    if &recount != stats {
        return Err(Error::Consistency(format!(
            "statistics {:?} do not match the store contents {:?}",
            stats.cumulative_counts(),
            recount.cumulative_counts()
        )));
    }

    let weights = match &options.pinned_weights {
        Some(w) if w.len() != shape.num_classes() => {
            return Err(Error::ClassCount(format!(
                "{} pinned weights for {} classes",
                w.len(),
                shape.num_classes()
            )))
        }
        Some(w) => w.clone(),
        None => stats.weights(shape, sched)?,
    };
    let weighted = stack.weighted(&weights)?;

    let budget = iteration_budget(shape, sched, iteration, store.len())?;
    let selection = match strategy {
        PixelStrategy::Dynamic => {
            select_dynamic(&weighted, budget as usize, store, options.execution)?
        }
        PixelStrategy::Region => {
            let per_image = budget / stack.len() as u64;
            select_region(&weighted, per_image as usize, store, options.execution)?
        }
    };
    let added = commit(
        store,
        &selection,
        stack,
        ground_truth,
        iteration,
        options.count_mode,
    )?;
    stats.advance(&added, iteration + 1)?;
    Ok(CbdaOutcome {
        selection,
        weights,
        budget,
    })
}
