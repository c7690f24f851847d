//! Class budgets, class weights and weighted acquisition scores.
//!
//! At AL iteration `i` each class `c` is allotted an ideal cumulative budget
//! `B_c = total_pixels * budget_fraction * goal[c] * i / N`. Its weight is
//! `max(1 - L_c / B_c, eps)` where `L_c` counts the pixels of that class
//! labelled in earlier iterations, and every pixel's score is multiplied by the
//! weight of its pseudo class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PseudoLabelMap, ScoreMatrix};
use crate::scalar::Scalar;
use crate::schedule::BudgetSchedule;
use crate::shape::DatasetShape;
use crate::store::{ActiveLabelStore, CountMode};

/// Ideal cumulative label budget of `class_id` at `iteration`, in pixels.
///
/// Not truncated: it is the denominator of the class weight.
pub fn class_budget<T: Scalar>(
    shape: &DatasetShape,
    sched: &BudgetSchedule<T>,
    iteration: u32,
    class_id: usize,
) -> Result<T> {
    sched.check_iteration(iteration)?;
    let goal = *sched
        .goal_distribution()
        .get(class_id)
        .ok_or(Error::Class {
            class: class_id,
            num_classes: sched.num_classes(),
        })?;
    let total = T::of(shape.total_pixels() as f64);
    let progress = T::of(f64::from(iteration)) / T::of(f64::from(sched.num_al_iterations()));
    Ok(total * sched.budget_fraction() * goal * progress)
}

/// `max(1 - count / budget, epsilon)`; a zero budget counts as exceeded.
pub fn class_weight<T: Scalar>(count: u64, budget: T, epsilon: T) -> T {
    if budget.is_nan() || budget <= T::zero() {
        return epsilon;
    }
    let w = T::one() - T::of(count as f64) / budget;
    if w > epsilon {
        w
    } else {
        epsilon
    }
}

/// Multiplies every score by the weight of the pixel's pseudo class.
pub fn apply_weights<T: Scalar>(
    scores: &ScoreMatrix<T>,
    pseudo: &PseudoLabelMap,
    weights: &[T],
) -> Result<ScoreMatrix<T>> {
    if !pseudo.same_grid(scores) {
        return Err(Error::Shape(format!(
            "scores {} ({}x{}) and pseudo labels {} ({}x{}) do not match",
            scores.image_id(),
            scores.height(),
            scores.width(),
            pseudo.image_id(),
            pseudo.height(),
            pseudo.width()
        )));
    }
    if weights.iter().any(|w| !(*w > T::zero() && *w <= T::one())) {
        return Err(Error::config("weights", "every weight must lie in (0, 1]"));
    }
    let weighted = scores
        .as_slice()
        .iter()
        .zip(pseudo.as_slice())
        .map(|(&s, &c)| {
            weights
                .get(usize::from(c))
                .map(|&w| s * w)
                .ok_or(Error::Class {
                    class: c.into(),
                    num_classes: weights.len(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix::from_trusted(
        scores.image_id(),
        scores.height(),
        scores.width(),
        weighted,
    ))
}

/// Cumulative per-class label counts gathered before AL iteration `iteration_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    cumulative_counts: Vec<u64>,
    iteration_index: u32,
}

impl ClassStats {
    pub fn new(cumulative_counts: Vec<u64>, iteration_index: u32) -> Self {
        Self {
            cumulative_counts,
            iteration_index,
        }
    }

    /// Recounts the store.
    pub fn gather(store: &ActiveLabelStore, mode: CountMode, iteration_index: u32) -> Self {
        Self::new(store.class_counts(mode), iteration_index)
    }

    pub fn cumulative_counts(&self) -> &[u64] {
        &self.cumulative_counts
    }

    pub fn iteration_index(&self) -> u32 {
        self.iteration_index
    }

    pub fn total(&self) -> u64 {
        self.cumulative_counts.iter().sum()
    }

    pub fn class_budgets<T: Scalar>(
        &self,
        shape: &DatasetShape,
        sched: &BudgetSchedule<T>,
    ) -> Result<Vec<T>> {
        if self.cumulative_counts.len() != sched.num_classes() {
            return Err(Error::ClassCount(format!(
                "statistics cover {} classes, schedule has {}",
                self.cumulative_counts.len(),
                sched.num_classes()
            )));
        }
        (0..sched.num_classes())
            .map(|c| class_budget(shape, sched, self.iteration_index, c))
            .collect()
    }

    /// One weight per class for the current iteration.
    pub fn weights<T: Scalar>(
        &self,
        shape: &DatasetShape,
        sched: &BudgetSchedule<T>,
    ) -> Result<Vec<T>> {
        let budgets = self.class_budgets(shape, sched)?;
        Ok(self
            .cumulative_counts
            .iter()
            .zip(budgets)
            .map(|(&l, b)| class_weight(l, b, sched.epsilon()))
            .collect())
    }

    /// Moves to `next_iteration`, adding the counts picked in between. Counts never decrease.
    pub fn advance(&mut self, added: &[u64], next_iteration: u32) -> Result<()> {
        if added.len() != self.cumulative_counts.len() {
            return Err(Error::ClassCount(format!(
                "expected {} class counts, got {}",
                self.cumulative_counts.len(),
                added.len()
            )));
        }
        for (total, &a) in self.cumulative_counts.iter_mut().zip(added) {
            *total += a;
        }
        self.iteration_index = next_iteration;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> DatasetShape {
        DatasetShape::new(10, 10, 10, 5).unwrap()
    }

    #[test]
    fn class_budget_first_iteration() {
        let sched = BudgetSchedule::<f64>::uniform(0.05, 5, 5).unwrap();
        for c in 0..5 {
            let b = class_budget(&shape(), &sched, 1, c).unwrap();
            // 1000 * 0.05 * (1/5) * (1/5)
            assert!((b - 2.0).abs() < 1e-12, "{b}");
        }
    }

    #[test]
    fn class_budget_last_iteration_uniform() {
        let sched = BudgetSchedule::<f64>::uniform(0.05, 5, 5).unwrap();
        let b = class_budget(&shape(), &sched, 5, 3).unwrap();
        assert!((b - 1000.0 * 0.05 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn class_budget_one_hot_goal() {
        let sched =
            BudgetSchedule::<f64>::new(0.05, 5, vec![1.0, 0.0, 0.0, 0.0, 0.0], 1e-6).unwrap();
        assert_eq!(class_budget(&shape(), &sched, 5, 0).unwrap(), 50.0);
        for c in 1..5 {
            assert_eq!(class_budget(&shape(), &sched, 5, c).unwrap(), 0.0);
        }
    }

    #[test]
    fn class_budget_errors() {
        let sched = BudgetSchedule::<f64>::uniform(0.05, 5, 5).unwrap();
        assert!(matches!(
            class_budget(&shape(), &sched, 0, 0),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(
            class_budget(&shape(), &sched, 6, 0),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(
            class_budget(&shape(), &sched, 1, 5),
            Err(Error::Class { .. })
        ));
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weight(0, 100.0, 1e-6), 1.0);
        assert_eq!(class_weight(100, 100.0, 1e-6), 1e-6);
        assert_eq!(class_weight(150, 100.0, 1e-6), 1e-6);
        assert_eq!(class_weight(25, 100.0, 1e-6), 0.75);
        assert_eq!(class_weight(0, 0.0, 1e-6), 1e-6);
        assert_eq!(class_weight(0, 0.0f32, 1e-3), 1e-3);
    }

    #[test]
    fn apply_weights_examples() {
        let scores = ScoreMatrix::new(0, 2, 2, vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let pseudo = PseudoLabelMap::new(0, 2, 2, vec![0, 1, 0, 1], 2).unwrap();
        let out = apply_weights(&scores, &pseudo, &[0.5, 1.0]).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 3.0, 1.0, 1.0]);

        let same = apply_weights(&scores, &pseudo, &[1.0, 1.0]).unwrap();
        assert_eq!(same, scores);

        let zeros = ScoreMatrix::new(0, 2, 2, vec![0.0; 4]).unwrap();
        let out = apply_weights(&zeros, &pseudo, &[1e-6, 0.3]).unwrap();
        assert!(out.as_slice().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn apply_weights_shape_mismatch() {
        let scores = ScoreMatrix::new(0, 2, 2, vec![1.0; 4]).unwrap();
        let pseudo = PseudoLabelMap::new(0, 1, 4, vec![0; 4], 2).unwrap();
        assert!(matches!(
            apply_weights(&scores, &pseudo, &[1.0, 1.0]),
            Err(Error::Shape(_))
        ));
        let other_id = PseudoLabelMap::new(7, 2, 2, vec![0; 4], 2).unwrap();
        assert!(matches!(
            apply_weights(&scores, &other_id, &[1.0, 1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn apply_weights_missing_class_weight() {
        let scores = ScoreMatrix::new(0, 1, 2, vec![1.0, 1.0]).unwrap();
        let pseudo = PseudoLabelMap::new(0, 1, 2, vec![0, 2], 3).unwrap();
        assert!(matches!(
            apply_weights(&scores, &pseudo, &[1.0, 1.0]),
            Err(Error::Class { .. })
        ));
    }

    #[test]
    fn stats_weights_start_at_one() {
        let sched = BudgetSchedule::<f64>::uniform(0.05, 5, 5).unwrap();
        let stats = ClassStats::new(vec![0; 5], 1);
        assert_eq!(stats.weights(&shape(), &sched).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn stats_advance_accumulates() {
        let mut stats = ClassStats::new(vec![1, 2], 1);
        stats.advance(&[3, 0], 2).unwrap();
        assert_eq!(stats.cumulative_counts(), &[4, 2]);
        assert_eq!(stats.iteration_index(), 2);
        assert_eq!(stats.total(), 6);
        assert!(stats.advance(&[1], 3).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weight_is_monotone_and_bounded(
                budget in 0.0f64..1e6,
                a in 0u64..2_000_000,
                b in 0u64..2_000_000,
                eps in 1e-9f64..0.5,
            ) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let w_lo = class_weight(lo, budget, eps);
                let w_hi = class_weight(hi, budget, eps);
                prop_assert!(w_hi <= w_lo);
                prop_assert!(w_lo >= eps && w_lo <= 1.0);
                if (hi as f64) >= budget * (1.0 - eps) {
                    prop_assert_eq!(w_hi, eps);
                }
            }

            #[test]
            fn weighting_preserves_order_within_a_class(
                s1 in 0.0f64..1e3, s2 in 0.0f64..1e3, w in 1e-6f64..=1.0,
            ) {
                let scores = ScoreMatrix::new(0, 1, 2, vec![s1, s2]).unwrap();
                let pseudo = PseudoLabelMap::new(0, 1, 2, vec![1, 1], 2).unwrap();
                let out = apply_weights(&scores, &pseudo, &[1.0, w]).unwrap();
                let (o1, o2) = (out.as_slice()[0], out.as_slice()[1]);
                // rounding is monotone, so order can collapse to a tie but never invert
                if s1 > s2 { prop_assert!(o1 >= o2); }
                if s1 < s2 { prop_assert!(o1 <= o2); }
                if s1 == s2 { prop_assert_eq!(o1, o2); }
            }

            #[test]
            fn budget_is_linear_and_sums_to_total(
                images in 1usize..50, side in 1usize..40, classes in 1usize..10,
                frac in 0.001f64..1.0, n in 1u32..12,
            ) {
                let shape = DatasetShape::new(images, side, side, classes).unwrap();
                let sched = BudgetSchedule::<f64>::uniform(frac, n, classes).unwrap();
                let first = class_budget(&shape, &sched, 1, 0).unwrap();
                for i in 1..=n {
                    let b = class_budget(&shape, &sched, i, 0).unwrap();
                    prop_assert!((b - f64::from(i) * first).abs() <= 1e-9 * b.max(1.0));
                }
                let sum: f64 = (0..classes).map(|c| class_budget(&shape, &sched, n, c).unwrap()).sum();
                let expected = shape.total_pixels() as f64 * frac;
                prop_assert!((sum - expected).abs() <= 1e-6 * expected);
            }
        }
    }
}
