//! Instances, solutions and exact evaluation of the three objectives.
//!
//! Bags and machines are 0-based in memory. Scenario indices `k` are machine
//! counts and therefore run over `1..=m`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("instance has no jobs")]
    NoJobs,
    #[error("bag count must be at least 2, got {0}")]
    TooFewBags(usize),
    #[error("job {0} has non-positive size")]
    NonPositiveJob(usize),
    #[error("probability of scenario {0} is negative")]
    NegativeProbability(usize),
    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(String),
    #[error("lp exponent must exceed 1, got {0}")]
    BadExponent(String),
    #[error("scenario {0} is not in the support")]
    NotInSupport(usize),
    #[error("invalid solution: {0}")]
    InvalidSolution(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    jobs: Vec<Rational>,
    q: Vec<Rational>,
}

impl Instance {
    /// Builds an instance with `m = q.len()` bags.
    pub fn new(jobs: Vec<Rational>, q: Vec<Rational>) -> Result<Self, ModelError> {
        if jobs.is_empty() {
            return Err(ModelError::NoJobs);
        }
        if q.len() < 2 {
            return Err(ModelError::TooFewBags(q.len()));
        }
        if let Some(j) = jobs.iter().position(|p| !p.is_positive()) {
            return Err(ModelError::NonPositiveJob(j));
        }
        if let Some(k) = q.iter().position(|p| p.is_negative()) {
            return Err(ModelError::NegativeProbability(k + 1));
        }
        let sum: Rational = q.iter().sum();
        if !sum.is_one() {
            return Err(ModelError::ProbabilitySum(rational::format_rational(&sum)));
        }
        Ok(Self { jobs, q })
    }

    pub fn jobs(&self) -> &[Rational] {
        &self.jobs
    }

    pub fn n(&self) -> usize {
        self.jobs.len()
    }

    /// Number of bags, which is also the largest possible machine count.
    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[Rational] {
        &self.q
    }

    /// Probability of `k` machines.
    pub fn prob(&self, k: usize) -> &Rational {
        &self.q[k - 1]
    }

    /// Scenario indices with positive probability, ascending.
    pub fn support(&self) -> Vec<usize> {
        (1..=self.m()).filter(|&k| self.prob(k).is_positive()).collect()
    }

    pub fn max_support(&self) -> usize {
        *self.support().last().expect("support is nonempty")
    }

    pub fn p_max(&self) -> Rational {
        self.jobs.iter().max().cloned().expect("jobs nonempty")
    }

    pub fn total(&self) -> Rational {
        self.jobs.iter().sum()
    }
}

/// The lp exponent, kept exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exponent(Rational);

impl Exponent {
    pub fn new(p: Rational) -> Result<Self, ModelError> {
        if p <= Rational::one() {
            return Err(ModelError::BadExponent(rational::format_rational(&p)));
        }
        Ok(Self(p))
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn integer(&self) -> Option<u32> {
        if self.0.is_integer() {
            u32::try_from(self.0.to_integer()).ok()
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        rational::to_f64(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Objective {
    Makespan,
    Santa,
    Lp(Exponent),
}

impl Objective {
    pub fn lp(p: Rational) -> Result<Self, ModelError> {
        Ok(Objective::Lp(Exponent::new(p)?))
    }

    /// Santa Claus maximizes; the other two minimize.
    pub fn maximizes(&self) -> bool {
        matches!(self, Objective::Santa)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Makespan => "makespan",
            Objective::Santa => "santa",
            Objective::Lp(_) => "lp",
        }
    }

    pub fn exponent(&self) -> Option<&Exponent> {
        match self {
            Objective::Lp(p) => Some(p),
            _ => None,
        }
    }

    /// Orders two scenario costs so that `Less` means `a` is preferable.
    pub fn prefer_scenario(&self, a: &ScenarioCost, b: &ScenarioCost) -> Ordering {
        let o = a.numeric_cmp(b);
        if self.maximizes() {
            o.reverse()
        } else {
            o
        }
    }

    /// Orders two expected costs so that `Less` means `a` is preferable.
    pub fn prefer(&self, a: &Cost, b: &Cost) -> Ordering {
        let o = a.numeric_cmp(b);
        if self.maximizes() {
            o.reverse()
        } else {
            o
        }
    }

    pub fn is_better(&self, a: &Cost, b: &Cost) -> bool {
        self.prefer(a, b) == Ordering::Less
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Lp(p) => write!(f, "lp(p={})", rational::format_rational(p.value())),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BagAssignment {
    pub bag_of: Vec<usize>,
}

impl BagAssignment {
    pub fn sizes(&self, instance: &Instance) -> Vec<Rational> {
        let mut sizes = vec![Rational::zero(); instance.m()];
        for (j, &b) in self.bag_of.iter().enumerate() {
            sizes[b] += &instance.jobs()[j];
        }
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioAssignment {
    pub k: usize,
    pub machine_of: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoStageSolution {
    pub bags: BagAssignment,
    pub per_scenario: BTreeMap<usize, ScenarioAssignment>,
}

impl TwoStageSolution {
    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSolution(msg));
        if self.bags.bag_of.len() != instance.n() {
            return bad(format!("{} jobs mapped, expected {}", self.bags.bag_of.len(), instance.n()));
        }
        if let Some(j) = self.bags.bag_of.iter().position(|&b| b >= instance.m()) {
            return bad(format!("job {j} mapped outside the {} bags", instance.m()));
        }
        let support = instance.support();
        let keys: Vec<usize> = self.per_scenario.keys().copied().collect();
        if keys != support {
            return bad(format!("scenarios {keys:?} do not match support {support:?}"));
        }
        for (&k, a) in &self.per_scenario {
            if a.k != k {
                return bad(format!("entry {k} carries k = {}", a.k));
            }
            if a.machine_of.len() != instance.m() {
                return bad(format!("scenario {k} maps {} bags", a.machine_of.len()));
            }
            if a.machine_of.iter().any(|&i| i >= k) {
                return bad(format!("scenario {k} uses a machine index ≥ {k}"));
            }
        }
        Ok(())
    }
}

/// Loads of `k` machines when bags of the given sizes are placed by `machine_of`.
pub fn loads_from_bags(bag_sizes: &[Rational], machine_of: &[usize], k: usize) -> Vec<Rational> {
    let mut loads = vec![Rational::zero(); k];
    for (b, size) in bag_sizes.iter().enumerate() {
        loads[machine_of[b]] += size;
    }
    loads
}

pub fn machine_loads(instance: &Instance, solution: &TwoStageSolution, k: usize) -> Result<Vec<Rational>, ModelError> {
    let a = solution.per_scenario.get(&k).ok_or(ModelError::NotInSupport(k))?;
    if !instance.prob(k).is_positive() {
        return Err(ModelError::NotInSupport(k));
    }
    Ok(loads_from_bags(&solution.bags.sizes(instance), &a.machine_of, k))
}

/// One scenario's objective value.
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioCost {
    /// Makespan or Santa Claus value.
    Exact(Rational),
    /// lp with integer `p`; `key = Σ W_i^p` and the cost is `key^(1/p)`.
    PowerKey { key: Rational, p: u32 },
    /// lp with fractional `p`: the norm itself.
    Approx(f64),
}

impl ScenarioCost {
    pub fn to_f64(&self) -> f64 {
        match self {
            ScenarioCost::Exact(v) => rational::to_f64(v),
            ScenarioCost::PowerKey { key, p } => rational::to_f64(key).powf(1.0 / *p as f64),
            ScenarioCost::Approx(v) => *v,
        }
    }

    pub fn numeric_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ScenarioCost::Exact(a), ScenarioCost::Exact(b)) => a.cmp(b),
            (ScenarioCost::PowerKey { key: a, .. }, ScenarioCost::PowerKey { key: b, .. }) => a.cmp(b),
            _ => approx_cmp(self.to_f64(), other.to_f64()),
        }
    }
}

pub const FLOAT_TOLERANCE: f64 = 1e-9;

fn approx_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= FLOAT_TOLERANCE * a.abs().max(b.abs()) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

pub fn scenario_cost(loads: &[Rational], objective: &Objective) -> ScenarioCost {
    match objective {
        Objective::Makespan => ScenarioCost::Exact(loads.iter().max().cloned().unwrap_or_default()),
        Objective::Santa => ScenarioCost::Exact(loads.iter().min().cloned().unwrap_or_default()),
        Objective::Lp(p) => match p.integer() {
            Some(p) => ScenarioCost::PowerKey { key: loads.iter().map(|w| rational::pow_u(w, p)).sum(), p },
            None => {
                let pf = p.to_f64();
                let s: f64 = loads.iter().map(|w| rational::to_f64(w).powf(pf)).sum();
                ScenarioCost::Approx(s.powf(1.0 / pf))
            }
        },
    }
}

/// Expected objective over the scenario distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Cost {
    Exact(Rational),
    /// `Σ q_k · key_k^(1/p)` for integer `p`, kept as `(q_k, key_k)` pairs.
    RootSum {
        p: u32,
        terms: Vec<(Rational, Rational)>,
    },
    Approx(f64),
}

impl Cost {
    pub fn to_f64(&self) -> f64 {
        match self {
            Cost::Exact(v) => rational::to_f64(v),
            Cost::RootSum { p, terms } => {
                terms.iter().map(|(q, key)| rational::to_f64(q) * rational::to_f64(key).powf(1.0 / *p as f64)).sum()
            }
            Cost::Approx(v) => *v,
        }
    }

    pub fn numeric_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cost::Exact(a), Cost::Exact(b)) => a.cmp(b),
            (Cost::RootSum { p, terms: a }, Cost::RootSum { p: p2, terms: b }) if p == p2 => {
                rational::compare_root_sums(a, b, *p)
            }
            _ => approx_cmp(self.to_f64(), other.to_f64()),
        }
    }

    /// Exact value as `"num/den"` when the cost is rational.
    pub fn exact_string(&self) -> Option<String> {
        match self {
            Cost::Exact(v) => Some(rational::format_rational(v)),
            Cost::RootSum { p, terms } => {
                let mut sum = Rational::zero();
                for (q, key) in terms {
                    sum += q * rational::exact_root(key, *p)?;
                }
                Some(rational::format_rational(&sum))
            }
            Cost::Approx(_) => None,
        }
    }

    /// Display form: the exact rational, or a decimal for irrational values.
    pub fn display(&self) -> String {
        match self.exact_string() {
            Some(s) => s,
            None => format!("{:.12}", self.to_f64()),
        }
    }

    /// Per-scenario p-th power keys, for integer-p lp costs.
    pub fn power_keys(&self) -> Option<&[(Rational, Rational)]> {
        match self {
            Cost::RootSum { terms, .. } => Some(terms),
            _ => None,
        }
    }
}

/// Combines per-scenario costs `(q_k, cost_k)` into the expected cost.
pub fn combine(objective: &Objective, parts: &[(Rational, ScenarioCost)]) -> Cost {
    match objective {
        Objective::Makespan | Objective::Santa => Cost::Exact(
            parts
                .iter()
                .map(|(q, c)| match c {
                    ScenarioCost::Exact(v) => q * v,
                    _ => unreachable!("makespan and santa costs are exact"),
                })
                .sum(),
        ),
        Objective::Lp(e) => match e.integer() {
            Some(p) => Cost::RootSum {
                p,
                terms: parts
                    .iter()
                    .map(|(q, c)| match c {
                        ScenarioCost::PowerKey { key, .. } => (q.clone(), key.clone()),
                        _ => unreachable!("integer exponent yields power keys"),
                    })
                    .collect(),
            },
            None => Cost::Approx(parts.iter().map(|(q, c)| rational::to_f64(q) * c.to_f64()).sum()),
        },
    }
}

pub fn expected_cost(
    instance: &Instance,
    solution: &TwoStageSolution,
    objective: &Objective,
) -> Result<Cost, ModelError> {
    solution.validate(instance)?;
    let sizes = solution.bags.sizes(instance);
    let parts: Vec<(Rational, ScenarioCost)> = instance
        .support()
        .into_iter()
        .map(|k| {
            let a = &solution.per_scenario[&k];
            let loads = loads_from_bags(&sizes, &a.machine_of, k);
            (instance.prob(k).clone(), scenario_cost(&loads, objective))
        })
        .collect();
    Ok(combine(objective, &parts))
}

/// Integer representation of rationals over a common denominator.
#[derive(Clone, Debug)]
pub struct Scaled {
    pub values: Vec<BigInt>,
    pub scale: BigInt,
}

impl Scaled {
    pub fn new(values: &[Rational]) -> Self {
        let scale = rational::common_denominator(values);
        let values = values.iter().map(|v| v.numer() * (&scale / v.denom())).collect();
        Self { values, scale }
    }
}
