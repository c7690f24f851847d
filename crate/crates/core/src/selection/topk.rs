//! Exact top-k over a stream of scored pixels.
//!
//! Candidates are ranked by descending score, then ascending
//! `(image, pixel)`, which is a total order because keys are unique. The
//! selected set is therefore unique, and any split of the stream into
//! partial top-k sets merges to the same answer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T> {
    pub score: T,
    pub image: u32,
    /// Row-major pixel index within the image.
    pub pixel: u32,
}

/// `Less` when `a` ranks ahead of `b`.
#[inline]
pub fn rank_order<T: Scalar>(a: &Candidate<T>, b: &Candidate<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.image.cmp(&b.image))
        .then(a.pixel.cmp(&b.pixel))
}

/// Heap entry whose maximum is the worst-ranked candidate.
struct Worst<T>(Candidate<T>);

impl<T: Scalar> PartialEq for Worst<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Worst<T> {}

impl<T: Scalar> PartialOrd for Worst<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Worst<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Bounded structure holding the `k` best candidates seen so far.
pub struct TopK<T> {
    k: usize,
    heap: BinaryHeap<Worst<T>>,
}

// Upper bound on the up-front allocation; the heap grows past it on demand.
const MAX_PREALLOC: usize = 1 << 20;

impl<T: Scalar> TopK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(MAX_PREALLOC)),
        }
    }

    #[inline]
    pub fn push(&mut self, candidate: Candidate<T>) {
        if self.heap.len() < self.k {
            self.heap.push(Worst(candidate));
            return;
        }
        if let Some(mut worst) = self.heap.peek_mut() {
            // cheap reject before the full comparison
            if candidate.score < worst.0.score {
                return;
            }
            if rank_order(&candidate, &worst.0) == Ordering::Less {
                *worst = Worst(candidate);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Best first.
    pub fn into_sorted_vec(self) -> Vec<Candidate<T>> {
        let mut out: Vec<_> = self.heap.into_iter().map(|w| w.0).collect();
        out.sort_unstable_by(rank_order);
        out
    }
}

impl<T: Scalar> Extend<Candidate<T>> for TopK<T> {
    fn extend<I: IntoIterator<Item = Candidate<T>>>(&mut self, iter: I) {
        for c in iter {
            self.push(c);
        }
    }
}

/// The `k` best candidates of `iter`, best first.
pub fn top_k<T: Scalar>(
    iter: impl IntoIterator<Item = Candidate<T>>,
    k: usize,
) -> Vec<Candidate<T>> {
    let mut top = TopK::new(k);
    top.extend(iter);
    top.into_sorted_vec()
}
