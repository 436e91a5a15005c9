//! Time-indexed state-action value tables and visit counters.

use std::ops::Range;

use ndarray::Array3;

/// The 3-dimensional table `Q(t_n, x, a)`, one state-action value matrix per
/// time point. The extra time dimension is what lets the learner represent a
/// time-dependent control on a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    values: Array3<f64>,
}

impl QTensor {
    pub fn zeros(n_points: usize, n_states: usize, n_actions: usize) -> Self {
        Self { values: Array3::zeros((n_points, n_states, n_actions)) }
    }

    pub fn n_points(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_states(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_actions(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn get(&self, n: usize, state: usize, action: usize) -> f64 {
        self.values[(n, state, action)]
    }

    pub fn set(&mut self, n: usize, state: usize, action: usize, value: f64) {
        self.values[(n, state, action)] = value;
    }

    pub fn entry_mut(&mut self, n: usize, state: usize, action: usize) -> &mut f64 {
        &mut self.values[(n, state, action)]
    }

    /// Minimum of `Q(t_n, x, ·)` over an admissible action range.
    pub fn min_over(&self, n: usize, state: usize, actions: Range<usize>) -> f64 {
        debug_assert!(!actions.is_empty());
        actions.map(|a| self.get(n, state, a)).fold(f64::INFINITY, f64::min)
    }

    /// Argmin of `Q(t_n, x, ·)` over an admissible action range, with the
    /// lowest index winning ties.
    pub fn argmin_over(&self, n: usize, state: usize, actions: Range<usize>) -> usize {
        debug_assert!(!actions.is_empty());
        let mut best = actions.start;
        let mut best_value = self.get(n, state, best);
        for a in actions.skip(1) {
            let value = self.get(n, state, a);
            if value < best_value {
                best = a;
                best_value = value;
            }
        }
        best
    }

    /// L1 distance between the time-`n` slices of two tables.
    pub fn slice_l1_distance(&self, other: &Self, n: usize) -> f64 {
        let a = self.values.index_axis(ndarray::Axis(0), n);
        let b = other.values.index_axis(ndarray::Axis(0), n);
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
    }

    /// Max over time slices of the per-slice L1 distance.
    pub fn max_slice_l1_distance(&self, other: &Self) -> f64 {
        (0..self.n_points()).map(|n| self.slice_l1_distance(other, n)).fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-`(t_n, x, a)` visit counts. The finite-horizon algorithm keeps a
/// distinct counter for every time point, so each `Q_n` matrix anneals its
/// own learning rate independently.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounter {
    counts: Array3<u64>,
}

impl VisitCounter {
    pub fn zeros(n_points: usize, n_states: usize, n_actions: usize) -> Self {
        Self { counts: Array3::zeros((n_points, n_states, n_actions)) }
    }

    /// Records one visit and returns the updated count.
    pub fn record(&mut self, n: usize, state: usize, action: usize) -> u64 {
        let c = &mut self.counts[(n, state, action)];
        *c += 1;
        *c
    }

    pub fn count(&self, n: usize, state: usize, action: usize) -> u64 {
        self.counts[(n, state, action)]
    }

    /// Total visits to a state at time `n`, summed over actions.
    pub fn state_occupancy(&self, n: usize, state: usize) -> u64 {
        (0..self.counts.shape()[2]).map(|a| self.counts[(n, state, a)]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_lowest_index_on_ties() {
        let mut q = QTensor::zeros(1, 1, 4);
        q.set(0, 0, 2, -1.0);
        q.set(0, 0, 3, -1.0);
        assert_eq!(q.argmin_over(0, 0, 0..4), 2);
        let zero = QTensor::zeros(1, 1, 4);
        assert_eq!(zero.argmin_over(0, 0, 0..4), 0);
        assert_eq!(zero.argmin_over(0, 0, 1..4), 1);
    }

    #[test]
    fn argmin_respects_admissible_range() {
        let mut q = QTensor::zeros(1, 1, 3);
        q.set(0, 0, 0, 3.0);
        q.set(0, 0, 1, 1.0);
        q.set(0, 0, 2, 2.0);
        assert_eq!(q.argmin_over(0, 0, 0..3), 1);
        assert_eq!(q.min_over(0, 0, 0..3), 1.0);
        assert_eq!(q.argmin_over(0, 0, 0..1), 0);
    }

    #[test]
    fn slice_norms() {
        let mut a = QTensor::zeros(2, 2, 2);
        let b = QTensor::zeros(2, 2, 2);
        a.set(1, 0, 1, 0.5);
        a.set(1, 1, 0, -0.25);
        assert_eq!(a.slice_l1_distance(&b, 0), 0.0);
        assert_eq!(a.slice_l1_distance(&b, 1), 0.75);
        assert_eq!(a.max_slice_l1_distance(&b), 0.75);
        assert_eq!(a.max_abs_difference(&b), 0.5);
    }

    #[test]
    fn visit_counts_accumulate() {
        let mut visits = VisitCounter::zeros(2, 2, 2);
        assert_eq!(visits.record(0, 1, 1), 1);
        assert_eq!(visits.record(0, 1, 1), 2);
        assert_eq!(visits.record(0, 1, 0), 1);
        assert_eq!(visits.count(0, 1, 1), 2);
        assert_eq!(visits.state_occupancy(0, 1), 3);
        assert_eq!(visits.total(), 3);
    }
}
