//! Property tests over random small instances.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use bagsched::baselines::{identical_machines_best, list_schedule, lpt_bags};
use bagsched::grouping::{build_scenario_list, select_representatives, CopyRule};
use bagsched::model::{
    self, expected_cost, scenario_cost, BagAssignment, Cost, Exponent, Instance, Objective, ScenarioAssignment,
    ScenarioCost, TwoStageSolution,
};
use bagsched::oracle::{exact_solve, OracleBudget};
use bagsched::rational::{ceil_log, int, pow_u, ratio, Rational};
use bagsched::rounding::{
    lift_solution, merge_small_jobs, round_jobs_geometric, size_classes, Direction, Epsilon, RoundedInstance,
    RoundedSolution, SizeGrid,
};
use bagsched::schemes::{solve, Budgets};
use proptest::prelude::*;

fn size() -> impl Strategy<Value = Rational> {
    (1i64..=60, 1i64..=6).prop_map(|(a, b)| ratio(a, b))
}

fn distribution(m: usize) -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(0i64..=4, m).prop_filter_map("some mass", |w| {
        let total: i64 = w.iter().sum();
        (total > 0).then(|| w.iter().map(|&x| ratio(x, total)).collect())
    })
}

fn instance(max_jobs: usize, max_bags: usize) -> impl Strategy<Value = Instance> {
    (1..=max_jobs, 2..=max_bags).prop_flat_map(|(n, m)| {
        (prop::collection::vec(size(), n), distribution(m)).prop_map(|(jobs, q)| Instance::new(jobs, q).unwrap())
    })
}

/// An instance with a random complete solution.
fn instance_with_solution() -> impl Strategy<Value = (Instance, TwoStageSolution)> {
    instance(7, 4).prop_flat_map(|inst| {
        let (n, m) = (inst.n(), inst.m());
        let machines: Vec<_> = (1..=m).map(|k| prop::collection::vec(0..k, m)).collect();
        (Just(inst), prop::collection::vec(0..m, n), machines).prop_map(|(inst, bag_of, machines)| {
            let support = inst.support();
            let per_scenario: BTreeMap<usize, ScenarioAssignment> = machines
                .into_iter()
                .enumerate()
                .map(|(i, machine_of)| (i + 1, ScenarioAssignment { k: i + 1, machine_of }))
                .filter(|(k, _)| support.contains(k))
                .collect();
            (inst, TwoStageSolution { bags: BagAssignment { bag_of }, per_scenario })
        })
    })
}

fn lp(p: i64) -> Objective {
    Objective::Lp(Exponent::new(int(p)).unwrap())
}

fn exact(c: &ScenarioCost) -> Rational {
    match c {
        ScenarioCost::Exact(v) => v.clone(),
        other => panic!("expected an exact value, got {other:?}"),
    }
}

fn key(c: &ScenarioCost) -> Rational {
    match c {
        ScenarioCost::PowerKey { key, .. } => key.clone(),
        other => panic!("expected a power key, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loads_add_up_to_the_total((inst, sol) in instance_with_solution()) {
        for k in inst.support() {
            let loads = model::machine_loads(&inst, &sol, k).unwrap();
            prop_assert_eq!(loads.iter().sum::<Rational>(), inst.total());
        }
    }

    #[test]
    fn point_mass_reproduces_the_scenario((inst, sol) in instance_with_solution(), pick in 0usize..4) {
        let support = inst.support();
        let k = support[pick % support.len()];
        let mut q = vec![int(0); inst.m()];
        q[k - 1] = int(1);
        let point = Instance::new(inst.jobs().to_vec(), q).unwrap();
        let loads = model::machine_loads(&inst, &sol, k).unwrap();
        let mut sol = sol;
        sol.per_scenario.retain(|&s, _| s == k);
        prop_assert_eq!(
            expected_cost(&point, &sol, &Objective::Makespan).unwrap(),
            Cost::Exact(exact(&scenario_cost(&loads, &Objective::Makespan)))
        );
        let Cost::RootSum { terms, .. } = expected_cost(&point, &sol, &lp(2)).unwrap() else { panic!("root sum") };
        prop_assert_eq!(terms, vec![(int(1), key(&scenario_cost(&loads, &lp(2))))]);
    }

    #[test]
    fn norm_between_makespan_and_its_spread(loads in prop::collection::vec(0i64..=40, 1..=6), p in 2u32..=3) {
        let loads: Vec<Rational> = loads.into_iter().map(int).collect();
        let k = int(loads.len() as i64);
        let makespan = exact(&scenario_cost(&loads, &Objective::Makespan));
        let key = key(&scenario_cost(&loads, &lp(p as i64)));
        // makespan ≤ norm ≤ k^(1/p)·makespan, compared as p-th powers.
        prop_assert!(pow_u(&makespan, p) <= key);
        prop_assert!(key <= k * pow_u(&makespan, p));
    }

    #[test]
    fn oracle_optima_respect_the_job_bounds(inst in instance(6, 3)) {
        let budget = OracleBudget::default();
        let p_max = inst.p_max();
        let n = int(inst.n() as i64);
        let (sol, cost) = exact_solve(&inst, &Objective::Makespan, &budget).unwrap();
        let Cost::Exact(opt) = &cost else { panic!("makespan is exact") };
        prop_assert!(p_max <= *opt && *opt <= &n * &p_max);
        let k_max = int(inst.max_support() as i64);
        prop_assert!(*opt >= p_max.clone().max(inst.total() / k_max));
        prop_assert!(*opt <= inst.total());
        prop_assert_eq!(expected_cost(&inst, &sol, &Objective::Makespan).unwrap(), cost.clone());

        let (sol, cost) = exact_solve(&inst, &lp(2), &budget).unwrap();
        let as_cost = |v: Rational| Cost::RootSum { p: 2, terms: vec![(int(1), pow_u(&v, 2))] };
        prop_assert_ne!(cost.numeric_cmp(&as_cost(p_max.clone())), Ordering::Less);
        prop_assert_ne!(cost.numeric_cmp(&as_cost(&n * &p_max)), Ordering::Greater);
        prop_assert_eq!(expected_cost(&inst, &sol, &lp(2)).unwrap(), cost);
    }

    #[test]
    fn santa_optimum_has_a_witness_job(inst in instance(6, 3)) {
        let (sol, cost) = exact_solve(&inst, &Objective::Santa, &OracleBudget::default()).unwrap();
        prop_assert_eq!(expected_cost(&inst, &sol, &Objective::Santa).unwrap(), cost);
        let n = int(inst.n() as i64);
        for k in inst.support() {
            let loads = model::machine_loads(&inst, &sol, k).unwrap();
            let opt = loads.iter().min().unwrap().clone();
            if opt == int(0) {
                continue;
            }
            let a = &sol.per_scenario[&k];
            let witness = (0..inst.n()).any(|j| {
                let p = &inst.jobs()[j];
                loads[a.machine_of[sol.bags.bag_of[j]]] == opt && *p <= opt && opt <= &n * p
            });
            prop_assert!(witness, "scenario {k}");
        }
    }

    #[test]
    fn rounding_moves_the_right_way(jobs in prop::collection::vec(size(), 1..=10), reference in size(), e in 5u32..=8) {
        let eps = Epsilon::new(e).unwrap();
        let up = round_jobs_geometric(&jobs, &reference, eps, Direction::Up);
        let down = round_jobs_geometric(&jobs, &reference, eps, Direction::Down);
        for ((p, u), d) in jobs.iter().zip(&up).zip(&down) {
            prop_assert!(u >= p && d <= p);
            prop_assert!(*u <= p * eps.growth() && d * eps.growth() >= *p);
        }
        let lo = jobs.iter().min().unwrap();
        let hi = jobs.iter().max().unwrap();
        let (classes, _) = size_classes(&up);
        let bound = ceil_log(&(hi / lo), &eps.growth()) + 1;
        prop_assert!(classes.len() as i64 <= bound);
    }

    #[test]
    fn makespan_rounding_has_few_classes(jobs in prop::collection::vec(size(), 1..=12), e in 5u32..=6) {
        let eps = Epsilon::new(e).unwrap();
        let guess = jobs.iter().max().unwrap().clone();
        let merged = merge_small_jobs(&jobs, &(&guess * eps.value() * eps.value()));
        let sizes: Vec<Rational> = merged.jobs.iter().map(|g| g.size.clone()).collect();
        let (classes, _) = size_classes(&round_jobs_geometric(&sizes, &guess, eps, Direction::Up));
        let e = e as usize;
        prop_assert!(classes.len() < 2 * e * e * e);
    }

    #[test]
    fn lifting_places_every_job_once(inst in instance(10, 4), seed in any::<u64>()) {
        let eps = Epsilon::new(5).unwrap();
        let reference = inst.p_max();
        let merged = merge_small_jobs(inst.jobs(), &(&reference / int(25)));
        let grid = SizeGrid::new(reference, eps, 0..=45, true, Direction::Up);
        let rounded = RoundedInstance::build(merged, grid);
        let m = inst.m();
        let mut bags = vec![Vec::new(); m];
        for (i, _) in rounded.jobs.iter().enumerate() {
            bags[(seed as usize).wrapping_add(i * 7) % m].push(i);
        }
        let per_scenario = inst.support().into_iter().map(|k| (k, (0..m).map(|b| b % k).collect())).collect();
        let solution = RoundedSolution { bags, pinned: vec![Vec::new(); m], per_scenario };
        let lifted = lift_solution(&solution, &rounded, &inst).unwrap();
        prop_assert_eq!(lifted.bags.bag_of.len(), inst.n());
        prop_assert!(lifted.validate(&inst).is_ok());
        let placed: Rational = lifted.bags.sizes(&inst).iter().sum();
        prop_assert_eq!(placed, inst.total());
    }

    #[test]
    fn representatives_leave_small_gaps(q in distribution(8), step in (1i64..=5, 2i64..=20)) {
        let step = ratio(step.0, step.1);
        let list = build_scenario_list(&q, 1..=8).unwrap();
        for rule in [CopyRule::Left, CopyRule::Right] {
            let reps = select_representatives(&list, &step, rule);
            for pair in reps.windows(2) {
                let between: Rational = list.entries.iter().filter(|e| e.k > pair[0] && e.k < pair[1]).map(|e| e.q.clone()).sum();
                prop_assert!(between < step);
            }
        }
    }

    #[test]
    fn exact_schedules_beat_list_scheduling(bags in prop::collection::vec(size(), 1..=7), k in 1usize..=4) {
        let list = list_schedule(&bags, k);
        let loads = model::loads_from_bags(&bags, &list.machine_of, k);
        let best = identical_machines_best(&bags, k, &Objective::Makespan, u64::MAX);
        prop_assert!(exact(&best.cost) <= *loads.iter().max().unwrap());
        let best = identical_machines_best(&bags, k, &Objective::Santa, u64::MAX);
        prop_assert!(exact(&best.cost) >= *loads.iter().min().unwrap());
    }

    #[test]
    fn lpt_ignores_the_order_of_equal_jobs(sizes in prop::collection::vec(1i64..=4, 2..=9), m in 2usize..=4, rot in 0usize..9) {
        let jobs: Vec<Rational> = sizes.iter().map(|&s| int(s)).collect();
        let mut permuted = jobs.clone();
        permuted.sort();
        let r = rot % permuted.len();
        permuted.rotate_left(r);
        permuted.sort_by(|a, b| b.cmp(a));
        let q = {
            let mut q = vec![int(0); m];
            q[m - 1] = int(1);
            q
        };
        let a = Instance::new(jobs, q.clone()).unwrap();
        let b = Instance::new(permuted, q).unwrap();
        let mut sa = lpt_bags(&a).sizes(&a);
        let mut sb = lpt_bags(&b).sizes(&b);
        sa.sort();
        sb.sort();
        prop_assert_eq!(sa, sb);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scheme_reports_are_sound(inst in instance(6, 3), which in 0usize..4) {
        let objective = [Objective::Makespan, Objective::Santa, lp(2), lp(3)][which].clone();
        let report = solve(&inst, &objective, Epsilon::new(5).unwrap(), &Budgets::default());
        prop_assert!(report.solution.bags.bag_of.iter().all(|&b| b < inst.m()));
        let again = expected_cost(&inst, &report.solution, &objective).unwrap();
        prop_assert_eq!(&again, &report.cost);
        prop_assert!(!objective.is_better(&report.baseline_cost, &report.cost));
        prop_assert!(report.diagnostics.extraction_violations.is_empty());
        let (_, oracle) = exact_solve(&inst, &objective, &OracleBudget::default()).unwrap();
        prop_assert!(!objective.is_better(&report.cost, &oracle));
    }
}
