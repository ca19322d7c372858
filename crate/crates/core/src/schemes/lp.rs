//! Expected lp-norm minimization.

use num_traits::{FromPrimitive, Zero};

use crate::baselines::identical_machines_best;
use crate::grouping::{build_scenario_list, representative_of, select_representatives, CopyRule};
use crate::model::{Cost, Exponent, Instance, Objective, ScenarioCost};
use crate::rational::{self, format_rational, int, Rational};
use crate::rounding::{opt_guess_candidates, Direction, Epsilon, RoundedInstance, SizeGrid};
use crate::tcip::{configuration_pool, enumerate_templates, Configuration, PoolLimits, ScenarioRoute};

use super::santa::merge_rest;
use super::search::{self, Rep, Rules, Rung, Setup};
use super::{
    collect_outcome, fill_missing, group_weights, lift_with_pinned, run_guesses, Budgets, GuessResult, GuessStatus,
    Harvest, Prepared,
};

struct Guess {
    lb: Rational,
    k: usize,
    huge: Vec<usize>,
    r_top: i64,
    pool_cap: usize,
    reps: Vec<usize>,
}

/// `x^p`, exact for integer exponents.
fn power(x: &Rational, p: &Exponent) -> Rational {
    match p.integer() {
        Some(pi) => rational::pow_u(x, pi),
        None => float(rational::to_f64(x).powf(p.to_f64())),
    }
}

fn float(x: f64) -> Rational {
    Rational::from_f64(x).unwrap_or_default()
}

/// Largest power of `1 + ε` whose p-th power times `k` is at most `target^p`.
fn lb_for(target: &Rational, k: usize, p: &Exponent, epsilon: Epsilon) -> Rational {
    let growth = epsilon.growth();
    let estimate = rational::to_f64(target) / (k as f64).powf(1.0 / p.to_f64());
    let mut r = (estimate.ln() / rational::to_f64(&growth).ln()).floor() as i64;
    let goal = power(target, p);
    let fits = |r: i64| power(&rational::powi(&growth, r), p) * int(k as i64) <= goal;
    while !fits(r) {
        r -= 1;
    }
    while fits(r + 1) {
        r += 1;
    }
    rational::powi(&growth, r)
}

pub(super) fn run(
    instance: &Instance,
    objective: &Objective,
    epsilon: Epsilon,
    budgets: &Budgets,
    baseline: &Cost,
) -> Harvest {
    let Objective::Lp(p) = objective else { unreachable!("lp pipeline") };
    let e = epsilon.denom() as i64;
    let pf = p.to_f64();
    let jobs = instance.jobs();
    let n = instance.n();
    let support = instance.support();
    let k_max = instance.max_support();
    let total = rational::to_f64(&instance.total());
    let p_max = rational::to_f64(&instance.p_max());
    // Each scenario costs at least max(p_max, P·k^(1/p - 1)).
    let scenario_floor = |k: usize| p_max.max(total * (k as f64).powf(1.0 / pf - 1.0));
    let lower: f64 = support.iter().map(|&k| rational::to_f64(instance.prob(k)) * scenario_floor(k)).sum();
    let upper = baseline.to_f64() * rational::to_f64(&epsilon.growth());
    let slack = 1e-9;

    let mut pruned = 0;
    let mut prepared = Vec::new();
    for guess in opt_guess_candidates(instance, epsilon) {
        let g = rational::to_f64(&guess);
        if g < lower * (1.0 - slack) || g >= upper * (1.0 + slack) {
            pruned += 1;
            continue;
        }
        for i in 1..=e + 1 {
            let opt_kmax = epsilon.value() * &guess * int(i);
            if rational::to_f64(&opt_kmax) < scenario_floor(k_max) * (1.0 - slack) {
                pruned += 1;
                continue;
            }
            let lb = lb_for(&opt_kmax, k_max, p, epsilon);
            for rho_exp in 2..=(e * e + 1) as u32 {
                let ub = &lb * rational::powi(&int(e), rho_exp as i64);
                let huge: Vec<usize> = (0..n).filter(|&j| jobs[j] > int(2) * &ub).collect();
                for &k in &support {
                    let label = format!(
                        "G={} opt_kmax={} rho={e}^{rho_exp} k={k}",
                        format_rational(&guess),
                        format_rational(&opt_kmax)
                    );
                    if huge.len() >= k {
                        prepared.push(Err(GuessResult::status(
                            label,
                            GuessStatus::Invalid,
                            Some(format!("{} huge jobs", huge.len())),
                        )));
                        continue;
                    }
                    prepared.push(Ok(prepare(instance, epsilon, label, &lb, &ub, rho_exp, k, huge.clone())));
                }
            }
        }
    }
    run_guesses(prepared, |g| solve_guess(instance, p, epsilon, budgets, &g.label, &g.work), pruned)
}

#[allow(clippy::too_many_arguments)]
fn prepare(
    instance: &Instance,
    epsilon: Epsilon,
    label: String,
    lb: &Rational,
    ub: &Rational,
    rho_exp: u32,
    k: usize,
    huge: Vec<usize>,
) -> Prepared<Guess> {
    let e = epsilon.denom() as i64;
    let unit = lb / int(e * e);
    let rest_total: Rational = (0..instance.n()).filter(|j| !huge.contains(j)).map(|j| &instance.jobs()[j]).sum();
    let rho = rational::powi(&int(e), rho_exp as i64);
    let by_ub: i64 = rational::floor_int(&(int(7) * ub / &unit)).try_into().unwrap_or(i64::MAX) - e;
    // Up-rounded contents never exceed (1+ε) times the non-huge total.
    let by_total: i64 =
        rational::ceil_int(&(epsilon.growth() * &rest_total / &unit)).try_into().unwrap_or(i64::MAX) - e;
    let r_top = by_ub.min(by_total).max(0);
    let bag_limit = instance.m() - huge.len();
    let pool_cap = (&rho * int(4 * e)).min(int(bag_limit as i64));
    let pool_cap: usize = rational::floor_int(&pool_cap).try_into().expect("at most m");
    let list = build_scenario_list(instance.q(), k..=instance.max_support()).expect("k is in the support");
    let step = epsilon.value() * epsilon.value() / &rho;
    let reps = select_representatives(&list, &step, CopyRule::Left);
    let signature = format!("{}|{huge:?}|{k}|{r_top}|{pool_cap}|{reps:?}", format_rational(lb));
    Prepared { label, signature, work: Guess { lb: lb.clone(), k, huge, r_top, pool_cap, reps } }
}

struct LpRules<'a> {
    reps: &'a [Rep],
    p: &'a Exponent,
    objective: &'a Objective,
    growth: Rational,
    /// `Σ p_j^p` over huge jobs, charged to every scenario.
    reserved: Rational,
    /// Smallest possible `Σ load^p` of the non-huge part per representative.
    floor_power: Vec<Rational>,
    schedule_nodes: u64,
}

impl Rules for LpRules<'_> {
    fn admitted(&self, _rep: usize, _level: Option<&Rational>, pool: &[Configuration]) -> Vec<usize> {
        (0..pool.len()).collect()
    }

    /// Norm values `W` on powers of `1 + ε`, each with power budget `W^p − reserved`,
    /// ending at the exact optimum on the given bags.
    fn ladder(&self, rep: usize, allowed: &[Rational]) -> Vec<Rung> {
        let opt = identical_machines_best(allowed, self.reps[rep].machines, self.objective, self.schedule_nodes);
        let budget0 = match opt.cost {
            ScenarioCost::PowerKey { key, .. } => key,
            ScenarioCost::Approx(norm) => float(norm.powf(self.p.to_f64())),
            ScenarioCost::Exact(_) => unreachable!("lp costs are norms"),
        };
        let root = |x: &Rational| float(rational::to_f64(x).powf(1.0 / self.p.to_f64()));
        let w0 = root(&(&self.reserved + &budget0));
        let w_floor = root(&(&self.reserved + &self.floor_power[rep]));
        let mut rungs = Vec::new();
        if w_floor > Rational::zero() {
            let mut r = rational::floor_log(&w_floor, &self.growth);
            loop {
                let w = rational::powi(&self.growth, r);
                let budget = power(&w, self.p) - &self.reserved;
                if budget >= budget0 {
                    break;
                }
                if budget > Rational::zero() {
                    rungs.push(Rung { rank: w, level: budget });
                }
                r += 1;
            }
        }
        rungs.retain(|rung| rung.rank < w0);
        rungs.push(Rung { rank: w0, level: budget0 });
        rungs
    }
}

fn solve_guess(
    instance: &Instance,
    p: &Exponent,
    epsilon: Epsilon,
    budgets: &Budgets,
    label: &str,
    g: &Guess,
) -> GuessResult {
    let e = epsilon.denom() as i64;
    let objective = Objective::Lp(p.clone());
    let h = g.huge.len();
    let m = instance.m();
    let unit = &g.lb / int(e * e);
    let merged = merge_rest(instance, &g.huge, &unit);
    let grid = SizeGrid::new(g.lb.clone(), epsilon, 0..=g.r_top, true, Direction::Up);
    let rounded = RoundedInstance::build(merged, grid);
    let budget_hit = |err: String| GuessResult::status(label.into(), GuessStatus::BudgetExceeded, Some(err));

    let templates = match enumerate_templates(
        &rounded.classes,
        &rounded.counts,
        &rounded.grid.max_value(),
        rounded.jobs.len(),
        budgets.template_ceiling,
    ) {
        Ok(t) => t,
        Err(err) => return budget_hit(err.to_string()),
    };
    let template_units: Vec<i64> =
        templates.iter().map(|t| rounded.grid.allowed_units(&t.total).expect("template within grid")).collect();
    let bag_limit = m - h;
    let pool = match configuration_pool(
        &templates,
        &template_units,
        &PoolLimits {
            template_cap: g.pool_cap,
            class_counts: Some(&rounded.counts),
            max_units: None,
            include_empty: true,
            ceiling: budgets.config_ceiling,
        },
    ) {
        Ok(p) => p,
        Err(err) => return budget_hit(err.to_string()),
    };

    let scenarios: Vec<usize> = instance.support().into_iter().filter(|&k| k >= g.k).collect();
    let weights = group_weights(instance, &g.reps, &scenarios, CopyRule::Left);
    let reps: Vec<Rep> =
        g.reps.iter().zip(weights).map(|(&k, weight)| Rep { scenario: k, machines: k - h, weight }).collect();
    let routes: Vec<ScenarioRoute> = scenarios
        .iter()
        .map(|&k| ScenarioRoute {
            scenario: k,
            machines: k - h,
            block: representative_of(&g.reps, k, CopyRule::Left).expect("smallest scenario is a representative"),
        })
        .collect();

    let reserved: Rational = g.huge.iter().map(|&j| power(&instance.jobs()[j], p)).sum();
    let rounded_total = rounded.total();
    let largest = rounded
        .classes
        .first()
        .map(|c| rounded.grid.allowed_units(c).map(|u| &unit * int(u)).unwrap_or_default())
        .unwrap_or_default();
    let floor_power = reps
        .iter()
        .map(|r| {
            let machines = int(r.machines as i64);
            let spread = &machines * power(&(&rounded_total / &machines), p);
            spread.max(power(&largest, p))
        })
        .collect();
    let rules = LpRules {
        reps: &reps,
        p,
        objective: &objective,
        growth: epsilon.growth(),
        reserved,
        floor_power,
        schedule_nodes: budgets.schedule_nodes,
    };
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn lb_is_the_largest_fitting_power() {
        let eps = Epsilon::new(5).unwrap();
        let p2 = Exponent::new(int(2)).unwrap();
        // target 6, k = 4: 6/√4 = 3; powers of 6/5 up to 3.
        let lb = lb_for(&int(6), 4, &p2, eps);
        assert!(lb <= int(3));
        assert!(lb * ratio(6, 5) > int(3));
        let p = Exponent::new(ratio(3, 2)).unwrap();
        let lb = lb_for(&int(8), 1, &p, eps);
        assert!(lb <= int(8) && lb * ratio(6, 5) > int(8));
    }
}
