use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-6;

const GOAL_SUM_TOLERANCE: f64 = 1e-9;

/// Active learning budget plan: total label fraction, number of AL rounds,
/// target class distribution and the weight floor.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSchedule<T> {
    budget_fraction: T,
    num_al_iterations: u32,
    goal_distribution: Vec<T>,
    epsilon: T,
}

impl<T: Scalar> BudgetSchedule<T> {
    /// Schedule with a uniform goal distribution and the default epsilon.
    pub fn uniform(budget_fraction: T, num_al_iterations: u32, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("num_classes", "must be strictly positive"));
        }
        let share = T::one() / T::of(num_classes as f64);
        Self::new(
            budget_fraction,
            num_al_iterations,
            vec![share; num_classes],
            T::of(DEFAULT_EPSILON),
        )
    }

    pub fn new(
        budget_fraction: T,
        num_al_iterations: u32,
        goal_distribution: Vec<T>,
        epsilon: T,
    ) -> Result<Self> {
        // A zero budget is admitted so degenerate runs produce an empty label set.
        if !(budget_fraction >= T::zero() && budget_fraction <= T::one()) {
            return Err(Error::config("budget_fraction", "must lie in [0, 1]"));
        }
        if num_al_iterations == 0 {
            return Err(Error::config("num_al_iterations", "must be at least 1"));
        }
        if goal_distribution.is_empty() {
            return Err(Error::config(
                "goal_distribution",
                "must contain one entry per class",
            ));
        }
        if goal_distribution
            .iter()
            .any(|g| !g.is_finite() || *g < T::zero())
        {
            return Err(Error::config(
                "goal_distribution",
                "entries must be finite and non-negative",
            ));
        }
        let sum: f64 = goal_distribution.iter().map(|g| g.to_f64_lossy()).sum();
        let tolerance =
            GOAL_SUM_TOLERANCE.max(T::epsilon().to_f64_lossy() * goal_distribution.len() as f64);
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::config(
                "goal_distribution",
                format!("must sum to 1 (got {sum})"),
            ));
        }
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::config(
                "epsilon",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(Self {
            budget_fraction,
            num_al_iterations,
            goal_distribution,
            epsilon,
        })
    }

    pub fn budget_fraction(&self) -> T {
        self.budget_fraction
    }

    pub fn num_al_iterations(&self) -> u32 {
        self.num_al_iterations
    }

    pub fn goal_distribution(&self) -> &[T] {
        &self.goal_distribution
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn num_classes(&self) -> usize {
        self.goal_distribution.len()
    }

    pub fn check_iteration(&self, iteration: u32) -> Result<()> {
        if iteration == 0 || iteration > self.num_al_iterations {
            return Err(Error::Schedule(format!(
                "iteration {iteration} outside 1..={}",
                self.num_al_iterations
            )));
        }
        Ok(())
    }
}
