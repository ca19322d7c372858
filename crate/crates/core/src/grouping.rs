//! Linear grouping of scenarios and enumeration of per-scenario bound histograms.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::ops::RangeInclusive;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupingError {
    #[error("no scenario with positive probability in {0}..={1}")]
    EmptySupport(usize, usize),
    #[error("scenario {0} has no representative on the required side")]
    NoRepresentative(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioEntry {
    pub k: usize,
    pub q: Rational,
    /// Mass of the entries before this one.
    pub before: Rational,
    /// Mass up to and including this one.
    pub upto: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioList {
    pub entries: Vec<ScenarioEntry>,
    pub total: Rational,
}

impl ScenarioList {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.k).collect()
    }
}

/// Scenarios in `range` with positive probability and their prefix masses.
/// `q[k - 1]` is the probability of `k` machines.
pub fn build_scenario_list(q: &[Rational], range: RangeInclusive<usize>) -> Result<ScenarioList, GroupingError> {
    let mut entries = Vec::new();
    let mut acc = Rational::zero();
    for k in range.clone() {
        let Some(qk) = q.get(k.wrapping_sub(1)) else { continue };
        if !qk.is_positive() {
            continue;
        }
        let before = acc.clone();
        acc += qk;
        entries.push(ScenarioEntry { k, q: qk.clone(), before, upto: acc.clone() });
    }
    if entries.is_empty() {
        return Err(GroupingError::EmptySupport(*range.start(), *range.end()));
    }
    Ok(ScenarioList { entries, total: acc })
}

/// Which representative a non-representative scenario copies its bound from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CopyRule {
    /// Largest representative at most the scenario (makespan, lp).
    Left,
    /// Smallest representative at least the scenario (santa).
    Right,
}

/// Scenarios whose mass interval `[before, upto)` contains a multiple of
/// `step`, plus the extreme index the copy rule needs.
pub fn select_representatives(list: &ScenarioList, step: &Rational, rule: CopyRule) -> Vec<usize> {
    assert!(step.is_positive(), "step must be positive");
    let mut reps: Vec<usize> = list
        .entries
        .iter()
        .filter(|e| {
            let first_multiple = (&e.before / step).ceil() * step;
            first_multiple < e.upto
        })
        .map(|e| e.k)
        .collect();
    let anchor = match rule {
        CopyRule::Left => list.entries.first(),
        CopyRule::Right => list.entries.last(),
    }
    .expect("list is nonempty")
    .k;
    if !reps.contains(&anchor) {
        reps.push(anchor);
        reps.sort_unstable();
    }
    reps
}

/// Position in `reps` (ascending) serving scenario `k` under `rule`.
pub fn representative_of(reps: &[usize], k: usize, rule: CopyRule) -> Option<usize> {
    match rule {
        CopyRule::Left => reps.iter().rposition(|&r| r <= k),
        CopyRule::Right => reps.iter().position(|&r| r >= k),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundDirection {
    /// Bounds cap the cost (makespan, lp).
    Upper,
    /// Bounds floor the value (santa).
    Lower,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistogramGuess {
    pub representatives: Vec<usize>,
    pub bounds: Vec<Rational>,
    pub direction: BoundDirection,
}

pub fn assign_scenario_bound(histogram: &HistogramGuess, k: usize, rule: CopyRule) -> Result<Rational, GroupingError> {
    representative_of(&histogram.representatives, k, rule)
        .map(|i| histogram.bounds[i].clone())
        .ok_or(GroupingError::NoRepresentative(k))
}

/// Lazy enumeration of grid assignments to the representatives.
pub struct HistogramIter {
    representatives: Vec<usize>,
    grid: Vec<Rational>,
    monotone: bool,
    direction: BoundDirection,
    state: Option<Vec<usize>>,
}

/// Every assignment of grid values to `representatives`; with `monotone`,
/// only those nonincreasing along the (ascending) representatives.
pub fn enumerate_bound_histograms(
    representatives: &[usize],
    value_grid: &[Rational],
    monotone: bool,
    direction: BoundDirection,
) -> HistogramIter {
    let mut grid = value_grid.to_vec();
    grid.sort_by(|a, b| b.cmp(a));
    grid.dedup();
    let state = (!grid.is_empty()).then(|| vec![0; representatives.len()]);
    HistogramIter { representatives: representatives.to_vec(), grid, monotone, direction, state }
}

impl Iterator for HistogramIter {
    type Item = HistogramGuess;

    fn next(&mut self) -> Option<HistogramGuess> {
        let idx = self.state.clone()?;
        let guess = HistogramGuess {
            representatives: self.representatives.clone(),
            bounds: idx.iter().map(|&i| self.grid[i].clone()).collect(),
            direction: self.direction,
        };
        // Odometer step; the grid is descending, so nondecreasing indices give
        // nonincreasing values.
        let g = self.grid.len();
        let mut next = idx;
        let mut pos = next.len();
        self.state = loop {
            if pos == 0 {
                break None;
            }
            pos -= 1;
            if next[pos] + 1 < g {
                next[pos] += 1;
                for i in pos + 1..next.len() {
                    next[i] = if self.monotone { next[pos] } else { 0 };
                }
                break Some(next);
            }
        };
        Some(guess)
    }
}

/// Histograms in order of their weighted sum, best first.
///
/// `values[i]` lists the candidate bounds of representative `i` from most to
/// least preferable; consecutive entries must be consecutive points of one
/// common grid. With `monotone`, only histograms nonincreasing along the
/// representatives are produced.
pub struct RankedHistograms {
    values: Vec<Vec<Rational>>,
    weights: Vec<Rational>,
    maximize: bool,
    monotone: bool,
    heap: BinaryHeap<Reverse<(Rational, Vec<u32>)>>,
    seen: HashSet<Vec<u32>>,
}

impl RankedHistograms {
    pub fn new(mut values: Vec<Vec<Rational>>, weights: Vec<Rational>, maximize: bool, monotone: bool) -> Self {
        assert_eq!(values.len(), weights.len());
        if monotone {
            // Trim so that the most preferable tuple is itself monotone.
            let r = values.len();
            if !maximize {
                let mut floor: Option<Rational> = None;
                for i in (0..r).rev() {
                    if let Some(f) = &floor {
                        values[i].retain(|v| v >= f);
                    }
                    if let Some(first) = values[i].first() {
                        floor = Some(first.clone());
                    }
                }
            } else {
                let mut ceiling: Option<Rational> = None;
                for list in values.iter_mut() {
                    if let Some(c) = &ceiling {
                        list.retain(|v| v <= c);
                    }
                    if let Some(first) = list.first() {
                        ceiling = Some(first.clone());
                    }
                }
            }
        }
        let mut ranked = Self { values, weights, maximize, monotone, heap: BinaryHeap::new(), seen: HashSet::new() };
        if ranked.values.iter().all(|v| !v.is_empty()) {
            let start = vec![0u32; ranked.values.len()];
            if ranked.valid(&start) {
                ranked.push(start);
            }
        }
        ranked
    }

    fn bounds(&self, idx: &[u32]) -> Vec<Rational> {
        idx.iter().enumerate().map(|(i, &j)| self.values[i][j as usize].clone()).collect()
    }

    fn valid(&self, idx: &[u32]) -> bool {
        !self.monotone || self.bounds(idx).windows(2).all(|w| w[0] >= w[1])
    }

    fn push(&mut self, idx: Vec<u32>) {
        if self.seen.insert(idx.clone()) {
            let sum = weighted_sum(&self.weights, &self.bounds(&idx));
            let key = if self.maximize { -sum } else { sum };
            self.heap.push(Reverse((key, idx)));
        }
    }
}

pub fn weighted_sum(weights: &[Rational], bounds: &[Rational]) -> Rational {
    weights.iter().zip(bounds).map(|(w, b)| w * b).sum()
}

impl Iterator for RankedHistograms {
    /// Bounds and their weighted sum.
    type Item = (Vec<Rational>, Rational);

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse((key, idx)) = self.heap.pop()?;
        for i in 0..idx.len() {
            if (idx[i] as usize) + 1 < self.values[i].len() {
                let mut succ = idx.clone();
                succ[i] += 1;
                if self.valid(&succ) {
                    self.push(succ);
                }
            }
        }
        let sum = if self.maximize { -key } else { key };
        Some((self.bounds(&idx), sum))
    }
}

/// Consecutive multiples of `unit` from `lo_units` to `hi_units`, in the given order.
pub fn unit_values(unit: &Rational, lo_units: i64, hi_units: i64, descending: bool) -> Vec<Rational> {
    let mut v: Vec<Rational> = (lo_units..=hi_units).map(|u| unit * rational::int(u)).collect();
    if descending {
        v.reverse();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn scenario_lists() {
        let l = build_scenario_list(&[ratio(1, 2), ratio(1, 2)], 1..=2).unwrap();
        assert_eq!(l.indices(), vec![1, 2]);
        assert_eq!(l.total, int(1));
        assert_eq!(l.entries[0].upto, ratio(1, 2));

        let l = build_scenario_list(&[int(0), int(1)], 1..=2).unwrap();
        assert_eq!(l.indices(), vec![2]);
        assert_eq!(l.entries[0].before, int(0));

        let l = build_scenario_list(&[ratio(9, 10), ratio(1, 20), ratio(1, 20)], 1..=3).unwrap();
        let ups: Vec<Rational> = l.entries.iter().map(|e| e.upto.clone()).collect();
        assert_eq!(ups, vec![ratio(9, 10), ratio(19, 20), int(1)]);

        assert!(build_scenario_list(&[int(1), int(0)], 2..=2).is_err());
    }

    #[test]
    fn representatives() {
        let l = build_scenario_list(&[ratio(1, 2), ratio(1, 2)], 1..=2).unwrap();
        assert_eq!(select_representatives(&l, &ratio(1, 8), CopyRule::Left), vec![1, 2]);

        let l = build_scenario_list(&[ratio(9, 10), ratio(1, 20), ratio(1, 20)], 1..=3).unwrap();
        assert_eq!(select_representatives(&l, &ratio(1, 8), CopyRule::Left), vec![1]);
        assert_eq!(select_representatives(&l, &ratio(1, 8), CopyRule::Right), vec![1, 3]);
        assert_eq!(select_representatives(&l, &ratio(1, 100), CopyRule::Left), vec![1, 2, 3]);
    }

    #[test]
    fn copy_rules() {
        let h = HistogramGuess { representatives: vec![1], bounds: vec![int(7)], direction: BoundDirection::Upper };
        assert_eq!(assign_scenario_bound(&h, 3, CopyRule::Left).unwrap(), int(7));
        assert!(assign_scenario_bound(&h, 3, CopyRule::Right).is_err());
        let h = HistogramGuess { representatives: vec![3], bounds: vec![int(2)], direction: BoundDirection::Lower };
        assert_eq!(assign_scenario_bound(&h, 1, CopyRule::Right).unwrap(), int(2));
        assert_eq!(assign_scenario_bound(&h, 3, CopyRule::Left).unwrap(), int(2));
    }

    #[test]
    fn histogram_counts() {
        let grid = [int(2), int(1)];
        assert_eq!(enumerate_bound_histograms(&[1], &grid, true, BoundDirection::Upper).count(), 2);
        let pairs: Vec<Vec<Rational>> =
            enumerate_bound_histograms(&[1, 2], &grid, true, BoundDirection::Upper).map(|h| h.bounds).collect();
        assert_eq!(pairs, vec![vec![int(2), int(2)], vec![int(2), int(1)], vec![int(1), int(1)]]);
        assert_eq!(enumerate_bound_histograms(&[1, 2], &grid, false, BoundDirection::Upper).count(), 4);
        assert_eq!(enumerate_bound_histograms(&[1, 2], &[], true, BoundDirection::Upper).count(), 0);
    }

    #[test]
    fn ranked_order_matches_sorted_enumeration() {
        let unit = int(1);
        for maximize in [false, true] {
            for monotone in [false, true] {
                let values = vec![
                    unit_values(&unit, 3, 7, maximize),
                    unit_values(&unit, 2, 6, maximize),
                    unit_values(&unit, 1, 5, maximize),
                ];
                let weights = vec![ratio(1, 2), ratio(1, 3), ratio(1, 6)];
                let ranked: Vec<(Vec<Rational>, Rational)> =
                    RankedHistograms::new(values, weights.clone(), maximize, monotone).collect();
                let sums: Vec<Rational> = ranked.iter().map(|r| r.1.clone()).collect();
                let mut sorted = sums.clone();
                if maximize {
                    sorted.sort_by(|a, b| b.cmp(a));
                } else {
                    sorted.sort();
                }
                assert_eq!(sums, sorted);
                // Count against a brute-force filter over the box.
                let mut expect = 0;
                for a in 3..=7 {
                    for b in 2..=6 {
                        for c in 1..=5 {
                            if !monotone || (a >= b && b >= c) {
                                expect += 1;
                            }
                        }
                    }
                }
                assert_eq!(ranked.len(), expect, "maximize={maximize} monotone={monotone}");
            }
        }
    }
}
