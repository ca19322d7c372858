//! Instance transformations shared by the three pipelines.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::ops::RangeInclusive;

use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::model::{BagAssignment, Instance, ScenarioAssignment, TwoStageSolution};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoundingError {
    #[error("epsilon must be 1/E for a positive integer E")]
    BadEpsilon,
    #[error("size {total} lies outside the grid [{min}, {max}]")]
    OutOfGrid { total: String, min: String, max: String },
    #[error("lifted solution misplaces job {0}")]
    Accounting(usize),
}

/// `ε = 1/E` for a positive integer `E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Epsilon(u32);

impl Epsilon {
    pub fn new(denom: u32) -> Result<Self, RoundingError> {
        if denom == 0 {
            return Err(RoundingError::BadEpsilon);
        }
        Ok(Self(denom))
    }

    /// Accepts `"1/E"`.
    pub fn parse(text: &str) -> Result<Self, RoundingError> {
        let (one, e) = text.trim().split_once('/').ok_or(RoundingError::BadEpsilon)?;
        if one.trim() != "1" {
            return Err(RoundingError::BadEpsilon);
        }
        Self::new(e.trim().parse().map_err(|_| RoundingError::BadEpsilon)?)
    }

    pub fn denom(self) -> u32 {
        self.0
    }

    pub fn value(self) -> Rational {
        rational::ratio(1, self.0 as i64)
    }

    /// `1 + ε`.
    pub fn growth(self) -> Rational {
        rational::ratio(self.0 as i64 + 1, self.0 as i64)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

/// Grid of bag sizes `(ε + r·ε²)·R`, i.e. `(E + r)` units of `R/E²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeGrid {
    reference: Rational,
    epsilon: Epsilon,
    r_min: i64,
    r_max: i64,
    includes_zero: bool,
    direction: Direction,
}

impl SizeGrid {
    pub fn new(
        reference: Rational,
        epsilon: Epsilon,
        r: RangeInclusive<i64>,
        includes_zero: bool,
        direction: Direction,
    ) -> Self {
        let (r_min, r_max) = (*r.start(), *r.end());
        assert!(r_min <= r_max, "empty grid range");
        assert!(epsilon.denom() as i64 + r_min > 0, "grid values must be positive");
        Self { reference, epsilon, r_min, r_max, includes_zero, direction }
    }

    pub fn reference(&self) -> &Rational {
        &self.reference
    }

    pub fn epsilon(&self) -> Epsilon {
        self.epsilon
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn includes_zero(&self) -> bool {
        self.includes_zero
    }

    pub fn r_range(&self) -> RangeInclusive<i64> {
        self.r_min..=self.r_max
    }

    /// `ε²·R`; every grid value is an integer multiple of it.
    pub fn unit(&self) -> Rational {
        let e = self.epsilon.denom() as i64;
        &self.reference / rational::int(e * e)
    }

    pub fn value(&self, r: i64) -> Rational {
        self.unit() * rational::int(self.epsilon.denom() as i64 + r)
    }

    pub fn min_value(&self) -> Rational {
        self.value(self.r_min)
    }

    pub fn max_value(&self) -> Rational {
        self.value(self.r_max)
    }

    pub fn min_units(&self) -> i64 {
        self.epsilon.denom() as i64 + self.r_min
    }

    pub fn max_units(&self) -> i64 {
        self.epsilon.denom() as i64 + self.r_max
    }

    /// Allowed size of `total`, in units of [`SizeGrid::unit`].
    pub fn allowed_units(&self, total: &Rational) -> Result<i64, RoundingError> {
        if total.is_zero() && self.includes_zero {
            return Ok(0);
        }
        let units = total / self.unit();
        let out = || RoundingError::OutOfGrid {
            total: rational::format_rational(total),
            min: rational::format_rational(&self.min_value()),
            max: rational::format_rational(&self.max_value()),
        };
        let u = match self.direction {
            Direction::Up => rational::ceil_int(&units).to_i64().ok_or_else(out)?.max(self.min_units()),
            Direction::Down => rational::floor_int(&units).to_i64().ok_or_else(out)?.min(self.max_units()),
        };
        if u < self.min_units() || u > self.max_units() {
            return Err(out());
        }
        Ok(u)
    }
}

/// Smallest grid value at least `total` (up) or largest at most `total` (down); zero stays zero.
pub fn allowed_size(total: &Rational, grid: &SizeGrid) -> Result<Rational, RoundingError> {
    Ok(grid.unit() * rational::int(grid.allowed_units(total)?))
}

/// The allowed size a bag with these contents is forced to use: the least
/// feasible one on an upward grid, the greatest on a downward grid.
pub fn tight_allowed_size(template_total: &Rational, grid: &SizeGrid) -> Result<Rational, RoundingError> {
    allowed_size(template_total, grid)
}

/// Powers of `1 + ε` covering `[p_max, n·p_max]`, ascending.
pub fn opt_guess_candidates(instance: &Instance, epsilon: Epsilon) -> Vec<Rational> {
    let base = epsilon.growth();
    let lo = instance.p_max();
    let hi = &lo * rational::int(instance.n() as i64);
    let r0 = rational::ceil_log(&lo, &base);
    let r1 = rational::ceil_log(&hi, &base);
    (r0..=r1).map(|r| rational::powi(&base, r)).collect()
}

/// A (possibly merged) job and the original indices behind it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobGroup {
    pub size: Rational,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Merged {
    pub jobs: Vec<JobGroup>,
    pub leftover: Option<JobGroup>,
}

pub fn merge_small_jobs(jobs: &[Rational], threshold: &Rational) -> Merged {
    let groups = jobs.iter().enumerate().map(|(j, p)| JobGroup { size: p.clone(), members: vec![j] }).collect();
    merge_groups(groups, threshold)
}

/// Unites the two smallest groups of size at most `threshold` until fewer than
/// two remain; a single survivor becomes the leftover.
pub fn merge_groups(groups: Vec<JobGroup>, threshold: &Rational) -> Merged {
    let (mut small, mut jobs): (Vec<JobGroup>, Vec<JobGroup>) = groups.into_iter().partition(|g| g.size <= *threshold);
    let mut heap: BinaryHeap<Reverse<(Rational, Vec<usize>)>> =
        small.drain(..).map(|g| Reverse((g.size, g.members))).collect();
    let mut leftover = None;
    while let Some(Reverse((a, ma))) = heap.pop() {
        let Some(Reverse((b, mb))) = heap.pop() else {
            leftover = Some(JobGroup { size: a, members: ma });
            break;
        };
        let size = a + b;
        let mut members = ma;
        members.extend(mb);
        members.sort_unstable();
        if size <= *threshold {
            heap.push(Reverse((size, members)));
        } else {
            jobs.push(JobGroup { size, members });
        }
    }
    jobs.sort_by_key(|g| g.members[0]);
    Merged { jobs, leftover }
}

/// Rounds each size to a power of `1 + ε` times `reference`.
pub fn round_jobs_geometric(
    jobs: &[Rational],
    reference: &Rational,
    epsilon: Epsilon,
    direction: Direction,
) -> Vec<Rational> {
    let base = epsilon.growth();
    jobs.iter()
        .map(|p| {
            let rel = p / reference;
            let r = match direction {
                Direction::Up => rational::ceil_log(&rel, &base),
                Direction::Down => rational::floor_log(&rel, &base),
            };
            reference * rational::powi(&base, r)
        })
        .collect()
}

/// Distinct values in descending order with their multiplicities.
pub fn size_classes(rounded: &[Rational]) -> (Vec<Rational>, Vec<usize>) {
    let mut counts: BTreeMap<Reverse<Rational>, usize> = BTreeMap::new();
    for r in rounded {
        *counts.entry(Reverse(r.clone())).or_default() += 1;
    }
    counts.into_iter().map(|(Reverse(v), c)| (v, c)).unzip()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundedJob {
    pub class: usize,
    pub members: Vec<usize>,
}

/// Merged and rounded jobs grouped into size classes (largest first).
#[derive(Clone, Debug)]
pub struct RoundedInstance {
    pub classes: Vec<Rational>,
    pub counts: Vec<usize>,
    pub jobs: Vec<RoundedJob>,
    pub leftover: Option<JobGroup>,
    pub grid: SizeGrid,
    pub epsilon: Epsilon,
}

impl RoundedInstance {
    /// Rounds merged groups on the geometric grid anchored at the grid's reference.
    pub fn build(merged: Merged, grid: SizeGrid) -> Self {
        let epsilon = grid.epsilon();
        let sizes: Vec<Rational> = merged.jobs.iter().map(|g| g.size.clone()).collect();
        let rounded = round_jobs_geometric(&sizes, grid.reference(), epsilon, grid.direction());
        let (classes, counts) = size_classes(&rounded);
        let jobs = merged
            .jobs
            .into_iter()
            .zip(&rounded)
            .map(|(g, r)| RoundedJob {
                class: classes.iter().position(|c| c == r).expect("class exists"),
                members: g.members,
            })
            .collect();
        Self { classes, counts, jobs, leftover: merged.leftover, grid, epsilon }
    }

    /// Total rounded size.
    pub fn total(&self) -> Rational {
        self.classes.iter().zip(&self.counts).map(|(c, &n)| c * rational::int(n as i64)).sum()
    }

    pub fn jobs_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.jobs.len()).filter(|&i| self.jobs[i].class == class).collect()
    }
}

/// A solution in terms of rounded jobs, plus bags of original jobs kept verbatim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundedSolution {
    /// Rounded job ids per bag.
    pub bags: Vec<Vec<usize>>,
    /// Original job ids per bag (same length as `bags`).
    pub pinned: Vec<Vec<usize>>,
    /// Machine of each bag, per scenario.
    pub per_scenario: BTreeMap<usize, Vec<usize>>,
}

/// Replaces rounded jobs by their original groups and re-inserts the leftover
/// into the smallest nonempty bag.
pub fn lift_solution(
    rounded_solution: &RoundedSolution,
    rounded_instance: &RoundedInstance,
    instance: &Instance,
) -> Result<TwoStageSolution, RoundingError> {
    let m = instance.m();
    assert!(rounded_solution.bags.len() <= m, "more bags than the instance allows");
    let mut bag_of: Vec<Option<usize>> = vec![None; instance.n()];
    fn place(bag_of: &mut [Option<usize>], j: usize, b: usize) -> Result<(), RoundingError> {
        match bag_of.get_mut(j) {
            Some(slot @ None) => {
                *slot = Some(b);
                Ok(())
            }
            _ => Err(RoundingError::Accounting(j)),
        }
    }
    for (b, contents) in rounded_solution.bags.iter().enumerate() {
        for &rj in contents {
            for &j in &rounded_instance.jobs[rj].members {
                place(&mut bag_of, j, b)?;
            }
        }
        for &j in rounded_solution.pinned.get(b).map(Vec::as_slice).unwrap_or(&[]) {
            place(&mut bag_of, j, b)?;
        }
    }
    if let Some(left) = &rounded_instance.leftover {
        let mut sizes = vec![Rational::zero(); m];
        for (j, b) in bag_of.iter().enumerate() {
            if let Some(b) = b {
                sizes[*b] += &instance.jobs()[j];
            }
        }
        let target = (0..m)
            .filter(|&b| !sizes[b].is_zero())
            .min_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(a.cmp(&b)))
            .unwrap_or(0);
        for &j in &left.members {
            place(&mut bag_of, j, target)?;
        }
    }
    let bag_of = bag_of
        .into_iter()
        .enumerate()
        .map(|(j, b)| b.ok_or(RoundingError::Accounting(j)))
        .collect::<Result<Vec<_>, _>>()?;
    let per_scenario = rounded_solution
        .per_scenario
        .iter()
        .map(|(&k, machines)| {
            let mut machine_of = machines.clone();
            machine_of.resize(m, 0);
            (k, ScenarioAssignment { k, machine_of })
        })
        .collect();
    Ok(TwoStageSolution { bags: BagAssignment { bag_of }, per_scenario })
}
