//! Expected makespan minimization.

use num_traits::Zero;

use crate::baselines::{identical_machines_best, list_schedule};
use crate::grouping::{build_scenario_list, representative_of, select_representatives, CopyRule};
use crate::model::{self, Cost, Instance, Objective, ScenarioAssignment};
use crate::rational::{self, format_rational, int, Rational};
use crate::rounding::{merge_small_jobs, opt_guess_candidates, Direction, Epsilon, RoundedInstance, SizeGrid};
use crate::tcip::{configuration_pool, enumerate_templates, Configuration, PoolLimits, ScenarioRoute};

use super::search::{self, Rep, Rules, Rung, Setup};
use super::{
    collect_outcome, fill_missing, group_weights, lift_with_pinned, run_guesses, Budgets, GuessResult, GuessStatus,
    Harvest, Prepared, ShortcutCheck,
};

pub(super) fn run(instance: &Instance, epsilon: Epsilon, budgets: &Budgets, baseline: &Cost) -> Harvest {
    let Cost::Exact(baseline) = baseline else { unreachable!("makespan costs are exact") };
    let total = instance.total();
    let p_max = instance.p_max();
    // Every scenario needs at least max(p_max, P/k).
    let lower: Rational =
        instance.support().into_iter().map(|k| instance.prob(k) * (&total / int(k as i64)).max(p_max.clone())).sum();
    let upper = baseline * epsilon.growth();
    let mut pruned = 0;
    let mut prepared = Vec::new();
    for guess in opt_guess_candidates(instance, epsilon) {
        if guess < lower || guess >= upper {
            pruned += 1;
            continue;
        }
        let label = format!("G={}", format_rational(&guess));
        prepared.push(Ok(Prepared { signature: label.clone(), label, work: guess }));
    }
    run_guesses(prepared, |p| solve_guess(instance, epsilon, budgets, &p.label, &p.work), pruned)
}

/// Largest support scenario served by list scheduling under guess `guess`:
/// those with `k·(2G + leftover) ≤ ε·P`.
pub(super) fn shortcut_limit(total: &Rational, guess: &Rational, leftover: &Rational, epsilon: Epsilon) -> usize {
    let per_machine = int(2) * guess + leftover;
    let k = rational::floor_int(&(epsilon.value() * total / per_machine));
    k.try_into().unwrap_or(usize::MAX)
}

/// List-schedules `k` machines on the final bags and checks `makespan < (1+ε)·P/k`.
pub(super) fn list_scheduled(
    bag_sizes: &[Rational],
    k: usize,
    total: &Rational,
    epsilon: Epsilon,
    guess: &str,
) -> (ScenarioAssignment, ShortcutCheck) {
    let a = list_schedule(bag_sizes, k);
    let loads = model::loads_from_bags(bag_sizes, &a.machine_of, k);
    let makespan = loads.into_iter().max().unwrap_or_default();
    let limit = epsilon.growth() * total / int(k as i64);
    let check = ShortcutCheck {
        guess: guess.to_string(),
        k,
        makespan: format_rational(&makespan),
        limit: format_rational(&limit),
        holds: makespan < limit,
    };
    (a, check)
}

struct MakespanRules<'a> {
    reps: &'a [Rep],
    unit: Rational,
    /// Lower bound on every representative's makespan, in units.
    floor_units: Vec<i64>,
    schedule_nodes: u64,
}

impl Rules for MakespanRules<'_> {
    fn admitted(&self, _rep: usize, level: Option<&Rational>, pool: &[Configuration]) -> Vec<usize> {
        let cap = level.map(|w| rational::floor_int(&(w / &self.unit)));
        (0..pool.len()).filter(|&c| cap.as_ref().is_none_or(|cap| *cap >= pool[c].units.into())).collect()
    }

    fn ladder(&self, rep: usize, allowed: &[Rational]) -> Vec<Rung> {
        let opt = identical_machines_best(allowed, self.reps[rep].machines, &Objective::Makespan, self.schedule_nodes);
        let model::ScenarioCost::Exact(h0) = opt.cost else { unreachable!("makespan costs are exact") };
        let h0_units: i64 = rational::floor_int(&(h0 / &self.unit)).try_into().expect("fits");
        let lo = self.floor_units[rep].min(h0_units);
        (lo..=h0_units)
            .map(|u| {
                let v = &self.unit * int(u);
                Rung { rank: v.clone(), level: v }
            })
            .collect()
    }
}

fn solve_guess(instance: &Instance, epsilon: Epsilon, budgets: &Budgets, label: &str, guess: &Rational) -> GuessResult {
    let e = epsilon.denom() as i64;
    let objective = Objective::Makespan;
    let unit = guess / int(e * e);
    let merged = merge_small_jobs(instance.jobs(), &unit);
    let leftover = merged.leftover.as_ref().map_or_else(Rational::zero, |g| g.size.clone());
    let grid = SizeGrid::new(guess.clone(), epsilon, 0..=2 * e * e - e, true, Direction::Up);
    let rounded = RoundedInstance::build(merged, grid);
    let total = instance.total();
    let m = instance.m();

    let listed = shortcut_limit(&total, guess, &leftover, epsilon);
    let support = instance.support();
    let (short, rest): (Vec<usize>, Vec<usize>) = support.iter().partition(|&&k| k <= listed);

    let templates = match enumerate_templates(
        &rounded.classes,
        &rounded.counts,
        &(int(2) * guess),
        rounded.jobs.len(),
        budgets.template_ceiling,
    ) {
        Ok(t) => t,
        Err(err) => return GuessResult::status(label.into(), GuessStatus::BudgetExceeded, Some(err.to_string())),
    };
    let template_units: Vec<i64> =
        templates.iter().map(|t| rounded.grid.allowed_units(&t.total).expect("template within grid")).collect();
    let pool = match configuration_pool(
        &templates,
        &template_units,
        &PoolLimits {
            template_cap: m,
            class_counts: Some(&rounded.counts),
            max_units: None,
            include_empty: true,
            ceiling: budgets.config_ceiling,
        },
    ) {
        Ok(p) => p,
        Err(err) => return GuessResult::status(label.into(), GuessStatus::BudgetExceeded, Some(err.to_string())),
    };

    let (reps, routes) = match rest.first() {
        None => (Vec::new(), Vec::new()),
        Some(&first) => {
            let list = build_scenario_list(instance.q(), first..=m).expect("support in range");
            let step = rational::pow_u(&epsilon.value(), 3);
            let chosen = select_representatives(&list, &step, CopyRule::Left);
            let weights = group_weights(instance, &chosen, &rest, CopyRule::Left);
            let reps: Vec<Rep> =
                chosen.iter().zip(weights).map(|(&k, weight)| Rep { scenario: k, machines: k, weight }).collect();
            let routes = rest
                .iter()
                .map(|&k| ScenarioRoute {
                    scenario: k,
                    machines: k,
                    block: representative_of(&chosen, k, CopyRule::Left)
                        .expect("leftmost scenario is a representative"),
                })
                .collect();
            (reps, routes)
        }
    };

    let rounded_total = rounded.total();
    let largest = rounded.classes.first().cloned().unwrap_or_default();
    let largest_units = rounded.grid.allowed_units(&largest).unwrap_or(0);
    let floor_units = reps
        .iter()
        .map(|r| {
            let spread: i64 =
                rational::ceil_int(&(&rounded_total / (&unit * int(r.machines as i64)))).try_into().expect("fits");
            spread.max(largest_units)
        })
        .collect();
    let rules = MakespanRules { reps: &reps, unit: unit.clone(), floor_units, schedule_nodes: budgets.schedule_nodes };
    let setup = Setup {
        objective: &objective,
        rounded,
        templates,
        template_units,
        pool,
        bag_limit: m,
        reps: reps.clone(),
        routes,
    };
    let outcome = search::run(&setup, &rules, budgets);
    collect_outcome(
        label.into(),
        outcome,
        |e, result| {
            let mut solution = lift_with_pinned(e, &[], &setup.rounded, instance);
            let sizes = solution.bags.sizes(instance);
            for &k in &short {
                let (a, check) = list_scheduled(&sizes, k, &total, epsilon, label);
                result.shortcut_checks.push(check);
                solution.per_scenario.insert(k, a);
            }
            result.degraded += fill_missing(&mut solution, instance, &objective, budgets);
            Some(solution)
        },
        instance,
        &objective,
    )
}
