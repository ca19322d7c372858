//! Expected Santa Claus value maximization.

use std::collections::BTreeSet;

use crate::baselines::identical_machines_best;
use crate::grouping::{build_scenario_list, representative_of, select_representatives, CopyRule};
use crate::model::{Cost, Instance, Objective, ScenarioCost};
use crate::rational::{self, format_rational, int, Rational};
use crate::rounding::{merge_small_jobs, Direction, Epsilon, JobGroup, Merged, RoundedInstance, SizeGrid};
use crate::tcip::{configuration_pool, enumerate_templates, Configuration, PoolLimits, ScenarioRoute};

use super::search::{self, Rep, Rules, Rung, Setup};
use super::{
    collect_outcome, fill_missing, group_weights, lift_with_pinned, run_guesses, Budgets, GuessResult, GuessStatus,
    Harvest, Prepared,
};

struct Guess {
    lb: Rational,
    k: usize,
    k_max: usize,
    huge: Vec<usize>,
    /// Top grid index after clipping to the non-huge total.
    r_top: i64,
    template_cap: Rational,
    pool_cap: usize,
    reps: Vec<usize>,
}

pub(super) fn run(instance: &Instance, epsilon: Epsilon, budgets: &Budgets, baseline: &Cost) -> Harvest {
    let Cost::Exact(baseline) = baseline else { unreachable!("santa values are exact") };
    let e = epsilon.denom() as i64;
    let growth = epsilon.growth();
    let jobs = instance.jobs();
    let n = instance.n();
    let m = instance.m();
    let total = instance.total();
    let support = instance.support();
    let mut prepared = Vec::new();
    for &k_max in &support {
        // LB ∈ (p_j/(1+ε), n·p_j] for some job, and the guessed scenario
        // carries at least an ε share of the optimum.
        let hi = &total / int(k_max as i64);
        let lo = epsilon.value() * baseline / &growth;
        let mut exponents = BTreeSet::new();
        for p in jobs {
            let from = rational::floor_log(&(p / &growth), &growth) + 1;
            let to = rational::floor_log(&(p * int(n as i64)), &growth);
            exponents.extend(from..=to);
        }
        let floor = if lo > Rational::default() { rational::floor_log(&lo, &growth) + 1 } else { i64::MIN };
        let ceiling = rational::floor_log(&hi, &growth);
        for r in exponents.into_iter().filter(|&r| r >= floor && r <= ceiling) {
            let lb = rational::powi(&growth, r);
            for rho_exp in 2..=e as u32 + 1 {
                let ub = &lb * rational::powi(&int(e), rho_exp as i64);
                let huge: Vec<usize> = (0..n).filter(|&j| jobs[j] > ub).collect();
                for &k in support.iter().filter(|&&k| k <= k_max) {
                    let label = format!("k_max={k_max} LB={} rho={e}^{rho_exp} k={k}", format_rational(&lb));
                    if huge.len() > m - 1 || huge.len() >= k {
                        prepared.push(Err(GuessResult::status(
                            label,
                            GuessStatus::Invalid,
                            Some(format!("{} huge jobs", huge.len())),
                        )));
                        continue;
                    }
                    prepared.push(prepare(instance, epsilon, label, &lb, &ub, rho_exp, k, k_max, huge.clone()));
                }
            }
        }
    }
    run_guesses(prepared, |p| solve_guess(instance, epsilon, budgets, &p.label, &p.work), 0)
}

#[allow(clippy::too_many_arguments, clippy::result_large_err)]
fn prepare(
    instance: &Instance,
    epsilon: Epsilon,
    label: String,
    lb: &Rational,
    ub: &Rational,
    rho_exp: u32,
    k: usize,
    k_max: usize,
    huge: Vec<usize>,
) -> Result<Prepared<Guess>, GuessResult> {
    let e = epsilon.denom() as i64;
    let unit = lb / int(e * e);
    let rest_total: Rational = (0..instance.n()).filter(|j| !huge.contains(j)).map(|j| &instance.jobs()[j]).sum();
    let rho = rational::powi(&int(e), rho_exp as i64);
    let by_ub: i64 = rational::floor_int(&(int(3) * ub / &unit)).try_into().unwrap_or(i64::MAX) - e;
    let by_total: i64 = rational::floor_int(&(&rest_total / &unit)).try_into().unwrap_or(i64::MAX) - e;
    let r_top = by_ub.min(by_total);
    if r_top < -3 {
        return Err(GuessResult::status(label, GuessStatus::Invalid, Some("non-huge jobs below the grid".into())));
    }
    let template_cap = (int(2) * ub).min(rest_total);
    let m = instance.m();
    let pool_cap = (&rho * int(3 * e)).min(int(m as i64));
    let pool_cap: usize = rational::floor_int(&pool_cap).try_into().expect("at most m");
    let list = build_scenario_list(instance.q(), k..=k_max).expect("k is in the support");
    let step = epsilon.value() * epsilon.value() / &rho * &list.total;
    let reps = select_representatives(&list, &step, CopyRule::Right);
    let signature = format!(
        "{}|{huge:?}|{k}|{k_max}|{r_top}|{}|{pool_cap}|{reps:?}",
        format_rational(lb),
        format_rational(&template_cap),
    );
    Ok(Prepared {
        label,
        signature,
        work: Guess { lb: lb.clone(), k, k_max, huge, r_top, template_cap, pool_cap, reps },
    })
}

/// Merges small non-huge jobs, keeping original job indices.
pub(super) fn merge_rest(instance: &Instance, huge: &[usize], threshold: &Rational) -> Merged {
    let rest: Vec<usize> = (0..instance.n()).filter(|j| !huge.contains(j)).collect();
    let sizes: Vec<Rational> = rest.iter().map(|&j| instance.jobs()[j].clone()).collect();
    let merged = merge_small_jobs(&sizes, threshold);
    let remap = |g: JobGroup| JobGroup { size: g.size, members: g.members.iter().map(|&i| rest[i]).collect() };
    Merged { jobs: merged.jobs.into_iter().map(remap).collect(), leftover: merged.leftover.map(remap) }
}

struct SantaRules<'a> {
    reps: &'a [Rep],
    unit: Rational,
    bag_limit: usize,
    /// Highest useful bound per representative, in units.
    top_units: Vec<i64>,
    schedule_nodes: u64,
}

impl Rules for SantaRules<'_> {
    fn admitted(&self, rep: usize, level: Option<&Rational>, pool: &[Configuration]) -> Vec<usize> {
        let size_cap = (self.bag_limit + 1 - self.reps[rep].machines) as u32;
        let need = level.map(|w| rational::ceil_int(&(w / &self.unit)));
        (0..pool.len())
            .filter(|&c| pool[c].size() <= size_cap && need.as_ref().is_none_or(|n| *n <= pool[c].units.into()))
            .collect()
    }

    fn ladder(&self, rep: usize, allowed: &[Rational]) -> Vec<Rung> {
        let opt = identical_machines_best(allowed, self.reps[rep].machines, &Objective::Santa, self.schedule_nodes);
        let ScenarioCost::Exact(h0) = opt.cost else { unreachable!("santa values are exact") };
        let h0_units: i64 = rational::floor_int(&(h0 / &self.unit)).try_into().expect("fits");
        let top = self.top_units[rep].max(h0_units);
        (h0_units..=top)
            .rev()
            .map(|u| {
                let v = &self.unit * int(u);
                Rung { rank: v.clone(), level: v }
            })
            .collect()
    }
}

fn solve_guess(instance: &Instance, epsilon: Epsilon, budgets: &Budgets, label: &str, g: &Guess) -> GuessResult {
    let e = epsilon.denom() as i64;
    let objective = Objective::Santa;
    let h = g.huge.len();
    let m = instance.m();
    let unit = &g.lb / int(e * e);
    let merged = merge_rest(instance, &g.huge, &unit);
    let grid = SizeGrid::new(g.lb.clone(), epsilon, -3..=g.r_top, true, Direction::Down);
    let rounded = RoundedInstance::build(merged, grid);
    let budget_hit = |err: String| GuessResult::status(label.into(), GuessStatus::BudgetExceeded, Some(err));

    let templates = match enumerate_templates(
        &rounded.classes,
        &rounded.counts,
        &g.template_cap,
        rounded.jobs.len(),
        budgets.template_ceiling,
    ) {
        Ok(t) => t,
        Err(err) => return budget_hit(err.to_string()),
    };
    // Templates too small for the grid cannot form a bag.
    let (templates, template_units): (Vec<_>, Vec<i64>) =
        templates.into_iter().filter_map(|t| rounded.grid.allowed_units(&t.total).ok().map(|u| (t, u))).unzip();

    let bag_limit = m - h;
    let scenarios: Vec<usize> = instance.support().into_iter().filter(|&k| k >= g.k && k <= g.k_max).collect();
    let weights = group_weights(instance, &g.reps, &scenarios, CopyRule::Right);
    let reps: Vec<Rep> =
        g.reps.iter().zip(weights).map(|(&k, weight)| Rep { scenario: k, machines: k - h, weight }).collect();
    let routes: Vec<ScenarioRoute> = scenarios
        .iter()
        .map(|&k| ScenarioRoute {
            scenario: k,
            machines: k - h,
            block: representative_of(&g.reps, k, CopyRule::Right).expect("largest scenario is a representative"),
        })
        .collect();
    let fewest = reps.iter().map(|r| r.machines).min().expect("at least one representative");
    let pool = match configuration_pool(
        &templates,
        &template_units,
        &PoolLimits {
            template_cap: g.pool_cap.min(bag_limit + 1 - fewest),
            class_counts: Some(&rounded.counts),
            max_units: None,
            include_empty: false,
            ceiling: budgets.config_ceiling,
        },
    ) {
        Ok(p) => p,
        Err(err) => return budget_hit(err.to_string()),
    };

    let rounded_units: i64 = rational::floor_int(&(rounded.total() / &unit)).try_into().expect("fits");
    let below_cap: i64 = rational::ceil_int(&(&g.template_cap / &unit)).try_into().unwrap_or(i64::MAX) - 1;
    let top_units = reps.iter().map(|r| below_cap.min(rounded_units / r.machines as i64)).collect();
    let rules = SantaRules { reps: &reps, unit, bag_limit, top_units, schedule_nodes: budgets.schedule_nodes };
    let setup = Setup {
        objective: &objective,
        rounded,
        templates,
        template_units,
        pool,
        bag_limit,
        reps: reps.clone(),
        routes,
    };
    let outcome = search::run(&setup, &rules, budgets);
    collect_outcome(
        label.into(),
        outcome,
        |e, result| {
            let mut solution = lift_with_pinned(e, &g.huge, &setup.rounded, instance);
            result.degraded += fill_missing(&mut solution, instance, &objective, budgets);
            Some(solution)
        },
        instance,
        &objective,
    )
}
