//! Greedy and exact subroutines on bags.

use num_traits::Zero;

use crate::model::{self, BagAssignment, Instance, Objective, ScenarioAssignment, ScenarioCost};
use crate::oracle;
use crate::rational::Rational;

/// Places bags in the given order, each on a least-loaded machine (lowest index on ties).
pub fn list_schedule(bag_sizes: &[Rational], k: usize) -> ScenarioAssignment {
    assert!(k >= 1, "at least one machine");
    let mut loads = vec![Rational::zero(); k];
    let mut machine_of = Vec::with_capacity(bag_sizes.len());
    for size in bag_sizes {
        let i = argmin(&loads);
        loads[i] += size;
        machine_of.push(i);
    }
    if k >= 2 && bag_sizes.len() > 1 {
        let total: Rational = bag_sizes.iter().sum();
        let largest = bag_sizes.iter().max().cloned().unwrap_or_default();
        let makespan = loads.iter().max().expect("k ≥ 1");
        assert!(
            makespan.is_zero() || *makespan < total / Rational::from_integer(k.into()) + largest,
            "list scheduling exceeded its guarantee"
        );
    }
    ScenarioAssignment { k, machine_of }
}

fn argmin(loads: &[Rational]) -> usize {
    let mut best = 0;
    for i in 1..loads.len() {
        if loads[i] < loads[best] {
            best = i;
        }
    }
    best
}

/// Longest jobs first, each into a currently smallest of the `m` bags.
pub fn lpt_bags(instance: &Instance) -> BagAssignment {
    let jobs = instance.jobs();
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[b].cmp(&jobs[a]).then(a.cmp(&b)));
    let mut sizes = vec![Rational::zero(); instance.m()];
    let mut bag_of = vec![0; jobs.len()];
    for j in order {
        let b = argmin(&sizes);
        sizes[b] += &jobs[j];
        bag_of[j] = b;
    }
    BagAssignment { bag_of }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestSchedule {
    pub assignment: ScenarioAssignment,
    pub cost: ScenarioCost,
    /// The exact search ran out of budget and list scheduling was used instead.
    pub degraded: bool,
}

/// Optimal placement of fixed bags on `k` machines, or longest-first list
/// scheduling when the exact search exceeds `node_limit`.
pub fn identical_machines_best(
    bag_sizes: &[Rational],
    k: usize,
    objective: &Objective,
    node_limit: u64,
) -> BestSchedule {
    match oracle::exact_fixed_bags(bag_sizes, k, objective, node_limit) {
        Ok(opt) => BestSchedule {
            assignment: ScenarioAssignment { k, machine_of: opt.machine_of },
            cost: opt.cost,
            degraded: false,
        },
        Err(_) => {
            let mut order: Vec<usize> = (0..bag_sizes.len()).collect();
            order.sort_by(|&a, &b| bag_sizes[b].cmp(&bag_sizes[a]).then(a.cmp(&b)));
            let sorted: Vec<Rational> = order.iter().map(|&b| bag_sizes[b].clone()).collect();
            let greedy = list_schedule(&sorted, k);
            let mut machine_of = vec![0; bag_sizes.len()];
            for (pos, &b) in order.iter().enumerate() {
                machine_of[b] = greedy.machine_of[pos];
            }
            let loads = model::loads_from_bags(bag_sizes, &machine_of, k);
            BestSchedule {
                cost: model::scenario_cost(&loads, objective),
                assignment: ScenarioAssignment { k, machine_of },
                degraded: true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Exponent;
    use crate::rational::int;

    fn ints(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| int(x)).collect()
    }

    fn loads(sizes: &[Rational], a: &ScenarioAssignment) -> Vec<Rational> {
        model::loads_from_bags(sizes, &a.machine_of, a.k)
    }

    #[test]
    fn list_scheduling_traces() {
        let s = ints(&[5, 4, 3, 3]);
        assert_eq!(loads(&s, &list_schedule(&s, 2)), ints(&[8, 7]));
        let s = ints(&[2, 2, 2, 2]);
        assert_eq!(loads(&s, &list_schedule(&s, 2)), ints(&[4, 4]));
        let s = ints(&[1]);
        assert_eq!(loads(&s, &list_schedule(&s, 3)), ints(&[1, 0, 0]));
    }

    #[test]
    fn lpt_bag_traces() {
        let inst = Instance::new(ints(&[3, 2, 2, 1]), vec![int(0), int(1)]).unwrap();
        assert_eq!(lpt_bags(&inst).bag_of, vec![0, 1, 1, 0]);
        let inst = Instance::new(ints(&[1, 1, 1, 1]), vec![int(0), int(1)]).unwrap();
        let mut sizes = lpt_bags(&inst).sizes(&inst);
        sizes.sort();
        assert_eq!(sizes, ints(&[2, 2]));
        let inst = Instance::new(ints(&[4, 2]), vec![int(0), int(0), int(1)]).unwrap();
        let bags = lpt_bags(&inst);
        assert_ne!(bags.bag_of[0], bags.bag_of[1]);
    }

    #[test]
    fn exact_identical_machines() {
        let s = ints(&[3, 3, 2, 2, 2]);
        let best = identical_machines_best(&s, 2, &Objective::Makespan, 1_000_000);
        assert_eq!(best.cost, ScenarioCost::Exact(int(6)));
        assert!(!best.degraded);
        let lp = Objective::Lp(Exponent::new(int(2)).unwrap());
        let best = identical_machines_best(&s, 2, &lp, 1_000_000);
        assert_eq!(best.cost, ScenarioCost::PowerKey { key: int(72), p: 2 });
        for objective in [Objective::Makespan, Objective::Santa] {
            let best = identical_machines_best(&s, 1, &objective, 1_000_000);
            assert_eq!(best.cost, ScenarioCost::Exact(int(12)));
        }
    }

    #[test]
    fn degraded_fallback_is_flagged() {
        let s = ints(&[5, 4, 3, 3, 3, 2, 2, 1]);
        let best = identical_machines_best(&s, 3, &Objective::Makespan, 1);
        assert!(best.degraded);
        assert_eq!(best.assignment.machine_of.len(), s.len());
    }
}
