//! Brute-force ground truth for small instances.
//!
//! Bags are partitioned by restricted-growth strings, and each scenario is
//! solved by enumerating bag-to-machine maps up to machine relabeling.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::{AddAssign, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    self, BagAssignment, Cost, Instance, Objective, Scaled, ScenarioAssignment, ScenarioCost, TwoStageSolution,
};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_jobs: usize,
    pub max_bags: usize,
    pub node_limit: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_jobs: 10, max_bags: 5, node_limit: 100_000_000 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{n} jobs exceed the oracle limit of {max}")]
    TooManyJobs { n: usize, max: usize },
    #[error("{m} bags exceed the oracle limit of {max}")]
    TooManyBags { m: usize, max: usize },
    #[error("search exceeded {0} nodes")]
    NodeLimit(u64),
}

/// Optimal second stage for fixed bags.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOptimum {
    pub cost: ScenarioCost,
    pub machine_of: Vec<usize>,
    pub nodes: u64,
}

trait Load: Clone + Ord + Zero + for<'a> AddAssign<&'a Self> + for<'a> SubAssign<&'a Self> + Into<BigInt> {}
impl Load for i128 {}
impl Load for BigInt {}

#[derive(Clone, Debug)]
enum Key<T> {
    Load(T),
    Big(BigInt),
    Float(f64),
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Makespan,
    Santa,
    PowerSum(u32),
    Fractional(f64),
}

impl Kind {
    fn of(objective: &Objective) -> Self {
        match objective {
            Objective::Makespan => Kind::Makespan,
            Objective::Santa => Kind::Santa,
            Objective::Lp(p) => match p.integer() {
                Some(p) => Kind::PowerSum(p),
                None => Kind::Fractional(p.to_f64()),
            },
        }
    }

    fn key<T: Load>(self, loads: &[T]) -> Key<T> {
        match self {
            Kind::Makespan => Key::Load(loads.iter().max().cloned().unwrap_or_else(T::zero)),
            Kind::Santa => Key::Load(loads.iter().min().cloned().unwrap_or_else(T::zero)),
            Kind::PowerSum(p) => {
                Key::Big(loads.iter().map(|w| num_traits::pow::pow(w.clone().into(), p as usize)).sum())
            }
            Kind::Fractional(p) => Key::Float(
                loads
                    .iter()
                    .map(|w| {
                        let w: BigInt = w.clone().into();
                        w.to_f64().unwrap_or(f64::INFINITY).powf(p)
                    })
                    .sum(),
            ),
        }
    }

    /// `Less` when `a` is strictly preferable.
    fn prefer<T: Load>(self, a: &Key<T>, b: &Key<T>) -> Ordering {
        let o = match (a, b) {
            (Key::Load(x), Key::Load(y)) => x.cmp(y),
            (Key::Big(x), Key::Big(y)) => x.cmp(y),
            (Key::Float(x), Key::Float(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
            _ => unreachable!("keys of one search share a kind"),
        };
        if matches!(self, Kind::Santa) {
            o.reverse()
        } else {
            o
        }
    }
}

struct Search<'a, T: Load> {
    sizes: &'a [T],
    suffix: Vec<T>,
    k: usize,
    kind: Kind,
    loads: Vec<T>,
    assign: Vec<usize>,
    best: Option<(Key<T>, Vec<usize>)>,
    nodes: u64,
    limit: u64,
}

impl<'a, T: Load> Search<'a, T> {
    fn new(sizes: &'a [T], k: usize, kind: Kind, limit: u64) -> Self {
        let mut suffix = vec![T::zero(); sizes.len() + 1];
        for b in (0..sizes.len()).rev() {
            let mut s = suffix[b + 1].clone();
            s += &sizes[b];
            suffix[b] = s;
        }
        Self {
            sizes,
            suffix,
            k,
            kind,
            loads: vec![T::zero(); k],
            assign: vec![0; sizes.len()],
            best: None,
            nodes: 0,
            limit,
        }
    }

    fn pruned(&self, b: usize) -> bool {
        let Some((best, _)) = &self.best else { return false };
        match (self.kind, best) {
            (Kind::Makespan, Key::Load(best)) => self.loads.iter().max().is_some_and(|m| m >= best),
            (Kind::Santa, Key::Load(best)) => {
                let mut bound = self.loads.iter().min().cloned().unwrap_or_else(T::zero);
                bound += &self.suffix[b];
                bound <= *best
            }
            _ => false,
        }
    }

    fn run(&mut self, b: usize, opened: usize) -> Result<(), OracleError> {
        if b == self.sizes.len() {
            let key = self.kind.key(&self.loads);
            let improves = match &self.best {
                None => true,
                Some((best, _)) => self.kind.prefer(&key, best) == Ordering::Less,
            };
            if improves {
                self.best = Some((key, self.assign.clone()));
            }
            return Ok(());
        }
        if self.pruned(b) {
            return Ok(());
        }
        let top = opened.min(self.k - 1);
        for i in 0..=top {
            self.nodes += 1;
            if self.nodes > self.limit {
                return Err(OracleError::NodeLimit(self.limit));
            }
            self.loads[i] += &self.sizes[b];
            self.assign[b] = i;
            self.run(b + 1, opened.max(i + 1))?;
            self.loads[i] -= &self.sizes[b];
        }
        Ok(())
    }
}

fn fits_i128(values: &[BigInt]) -> bool {
    let total: BigInt = values.iter().sum();
    total.bits() < 100
}

/// Best assignment of scaled bag sizes; zero bags go to machine 0.
fn best_scaled(
    sizes: &[BigInt],
    k: usize,
    kind: Kind,
    limit: u64,
) -> Result<(Key<BigInt>, Vec<usize>, u64), OracleError> {
    let nonzero: Vec<usize> = (0..sizes.len()).filter(|&b| !sizes[b].is_zero()).collect();
    let expand = |assign: &[usize]| {
        let mut machine_of = vec![0; sizes.len()];
        for (pos, &b) in nonzero.iter().enumerate() {
            machine_of[b] = assign[pos];
        }
        machine_of
    };
    if fits_i128(sizes) {
        let small: Vec<i128> = nonzero.iter().map(|&b| sizes[b].to_i128().unwrap()).collect();
        let mut s = Search::new(&small, k, kind, limit);
        s.run(0, 0)?;
        let (key, assign) = s.best.expect("at least one assignment");
        let key = match key {
            Key::Load(v) => Key::Load(BigInt::from(v)),
            Key::Big(v) => Key::Big(v),
            Key::Float(v) => Key::Float(v),
        };
        Ok((key, expand(&assign), s.nodes))
    } else {
        let big: Vec<BigInt> = nonzero.iter().map(|&b| sizes[b].clone()).collect();
        let mut s = Search::new(&big, k, kind, limit);
        s.run(0, 0)?;
        let (key, assign) = s.best.expect("at least one assignment");
        Ok((key, expand(&assign), s.nodes))
    }
}

fn unscale(key: Key<BigInt>, scale: &BigInt, kind: Kind) -> ScenarioCost {
    match (key, kind) {
        (Key::Load(v), _) => ScenarioCost::Exact(Rational::new(v, scale.clone())),
        (Key::Big(v), Kind::PowerSum(p)) => {
            ScenarioCost::PowerKey { key: Rational::new(v, num_traits::pow::pow(scale.clone(), p as usize)), p }
        }
        (Key::Float(v), Kind::Fractional(p)) => {
            let s = scale.to_f64().unwrap_or(f64::INFINITY);
            ScenarioCost::Approx(v.powf(1.0 / p) / s)
        }
        _ => unreachable!("key kind matches objective"),
    }
}

/// Optimal scenario cost for fixed bags on `k` identical machines.
pub fn exact_fixed_bags(
    bag_sizes: &[Rational],
    k: usize,
    objective: &Objective,
    node_limit: u64,
) -> Result<ScenarioOptimum, OracleError> {
    assert!(k >= 1, "at least one machine");
    let scaled = Scaled::new(bag_sizes);
    let kind = Kind::of(objective);
    let (key, machine_of, nodes) = best_scaled(&scaled.values, k, kind, node_limit)?;
    // Re-evaluate on the rational loads so the cost is bit-identical to model::scenario_cost.
    let loads = model::loads_from_bags(bag_sizes, &machine_of, k);
    let cost = model::scenario_cost(&loads, objective);
    debug_assert_eq!(cost.numeric_cmp(&unscale(key, &scaled.scale, kind)), Ordering::Equal);
    Ok(ScenarioOptimum { cost, machine_of, nodes })
}

/// All restricted-growth strings of length `n` with at most `blocks` blocks.
pub fn restricted_growth_strings(n: usize, blocks: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut s = vec![0u8; n];
    fn rec(s: &mut Vec<u8>, i: usize, max_used: usize, blocks: usize, out: &mut Vec<Vec<u8>>) {
        if i == s.len() {
            out.push(s.clone());
            return;
        }
        let top = (max_used + 1).min(blocks - 1);
        for v in 0..=top {
            s[i] = v as u8;
            rec(s, i + 1, max_used.max(v), blocks, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(&mut s, 1, 0, blocks, &mut out);
    out
}

struct PartitionValue {
    total: Cost,
    per_scenario: Vec<Vec<usize>>,
}

/// Exact two-stage optimum by exhaustive enumeration.
pub fn exact_solve(
    instance: &Instance,
    objective: &Objective,
    budget: &OracleBudget,
) -> Result<(TwoStageSolution, Cost), OracleError> {
    if instance.n() > budget.max_jobs {
        return Err(OracleError::TooManyJobs { n: instance.n(), max: budget.max_jobs });
    }
    if instance.m() > budget.max_bags {
        return Err(OracleError::TooManyBags { m: instance.m(), max: budget.max_bags });
    }
    let m = instance.m();
    let support = instance.support();
    let scaled = Scaled::new(instance.jobs());
    let kind = Kind::of(objective);
    let strings = restricted_growth_strings(instance.n(), m);
    let nodes = AtomicU64::new(0);

    let evaluate = |rgs: &Vec<u8>| -> Result<PartitionValue, OracleError> {
        let mut sizes = vec![BigInt::zero(); m];
        for (j, &b) in rgs.iter().enumerate() {
            sizes[b as usize] += &scaled.values[j];
        }
        let mut parts = Vec::with_capacity(support.len());
        let mut per_scenario = Vec::with_capacity(support.len());
        for &k in &support {
            let (key, machine_of, used) = best_scaled(&sizes, k, kind, budget.node_limit)?;
            let total = nodes.fetch_add(used, AtomicOrdering::Relaxed) + used;
            if total > budget.node_limit {
                return Err(OracleError::NodeLimit(budget.node_limit));
            }
            parts.push((instance.prob(k).clone(), unscale(key, &scaled.scale, kind)));
            per_scenario.push(machine_of);
        }
        Ok(PartitionValue { total: model::combine(objective, &parts), per_scenario })
    };

    let values: Vec<Result<PartitionValue, OracleError>> = strings.par_iter().map(evaluate).collect();
    let mut best: Option<(usize, PartitionValue)> = None;
    for (idx, v) in values.into_iter().enumerate() {
        let v = v?;
        let better = match &best {
            None => true,
            Some((_, b)) => objective.is_better(&v.total, &b.total),
        };
        if better {
            best = Some((idx, v));
        }
    }
    let (idx, value) = best.expect("at least one partition");
    let solution = TwoStageSolution {
        bags: BagAssignment { bag_of: strings[idx].iter().map(|&b| b as usize).collect() },
        per_scenario: support
            .iter()
            .zip(value.per_scenario)
            .map(|(&k, machine_of)| (k, ScenarioAssignment { k, machine_of }))
            .collect::<BTreeMap<_, _>>(),
    };
    let cost = model::expected_cost(instance, &solution, objective).expect("oracle solutions are valid");
    Ok((solution, cost))
}
