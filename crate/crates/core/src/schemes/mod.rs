//! The three approximation pipelines and best-of selection against a baseline.

mod lp;
mod makespan;
mod santa;
mod search;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{identical_machines_best, lpt_bags};
use crate::model::{self, BagAssignment, Cost, Instance, Objective, ScenarioAssignment, TwoStageSolution};
use crate::rational::Rational;
use crate::rounding::{lift_solution, Epsilon, RoundedInstance};
use crate::tcip::Extraction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budgets {
    /// Search nodes per feasibility program.
    pub ip_nodes: u64,
    pub template_ceiling: usize,
    pub config_ceiling: usize,
    /// Extra best-first programs per guess after bisection.
    pub refine_programs: usize,
    /// Node limit of the exact identical-machines subroutine.
    pub schedule_nodes: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            ip_nodes: 200_000,
            template_ceiling: 200_000,
            config_ceiling: 500_000,
            refine_programs: 2,
            schedule_nodes: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessStatus {
    Feasible,
    Infeasible,
    BudgetExceeded,
    /// The guess violates its own preconditions (for example too many huge jobs).
    Invalid,
    /// Produces the same program as an earlier guess.
    Duplicate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GuessRecord {
    pub guess: String,
    pub status: GuessStatus,
    pub programs: usize,
    pub nodes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A scenario scheduled by list scheduling because the guess makes it cheap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShortcutCheck {
    pub guess: String,
    pub k: usize,
    pub makespan: String,
    /// `(1 + ε)·P/k`.
    pub limit: String,
    pub holds: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub guesses: Vec<GuessRecord>,
    /// Guesses outside the range any optimum can fall into.
    pub pruned: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub budget_exceeded: usize,
    pub invalid: usize,
    pub duplicate: usize,
    pub programs: usize,
    pub nodes: u64,
    pub candidates: usize,
    pub extraction_checks: usize,
    pub extraction_violations: Vec<String>,
    pub shortcut_checks: Vec<ShortcutCheck>,
    pub degraded_schedules: usize,
}

impl Diagnostics {
    fn record(&mut self, record: GuessRecord) {
        match record.status {
            GuessStatus::Feasible => self.feasible += 1,
            GuessStatus::Infeasible => self.infeasible += 1,
            GuessStatus::BudgetExceeded => self.budget_exceeded += 1,
            GuessStatus::Invalid => self.invalid += 1,
            GuessStatus::Duplicate => self.duplicate += 1,
        }
        self.programs += record.programs;
        self.nodes += record.nodes;
        self.guesses.push(record);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Best solution came from a guess of the pipeline.
    Scheme,
    /// No guess beat the longest-first baseline.
    Baseline,
    /// At most `m` jobs: one job per bag.
    Shortcut,
    /// Brute-force optimum.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub objective: Objective,
    pub epsilon: Epsilon,
    pub method: Method,
    pub solution: TwoStageSolution,
    pub cost: Cost,
    pub baseline_cost: Cost,
    /// Some guess produced a solution (false means a baseline-only report).
    pub scheme_feasible: bool,
    pub diagnostics: Diagnostics,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug)]
pub(crate) struct Candidate {
    solution: TwoStageSolution,
    cost: Cost,
}

/// Everything a pipeline produced.
#[derive(Default)]
struct Harvest {
    candidates: Vec<Candidate>,
    diagnostics: Diagnostics,
}

/// Runs the pipeline matching `objective` and returns the best of its
/// solutions and the baseline, judged by exact expected cost.
pub fn solve(instance: &Instance, objective: &Objective, epsilon: Epsilon, budgets: &Budgets) -> RunReport {
    let start = Instant::now();
    let mut diagnostics = Diagnostics::default();
    let baseline = baseline(instance, objective, budgets, &mut diagnostics);
    let (method, best, scheme_feasible) = if instance.n() <= instance.m() {
        let shortcut = one_job_per_bag(instance, objective, budgets, &mut diagnostics);
        pick(objective, vec![shortcut], &baseline, Method::Shortcut)
    } else {
        let harvest = match objective {
            Objective::Makespan => makespan::run(instance, epsilon, budgets, &baseline.cost),
            Objective::Santa => santa::run(instance, epsilon, budgets, &baseline.cost),
            Objective::Lp(_) => lp::run(instance, objective, epsilon, budgets, &baseline.cost),
        };
        let found = !harvest.candidates.is_empty();
        let degraded = diagnostics.degraded_schedules;
        diagnostics = harvest.diagnostics;
        diagnostics.degraded_schedules += degraded;
        diagnostics.candidates = harvest.candidates.len();
        let (method, best, _) = pick(objective, harvest.candidates, &baseline, Method::Scheme);
        (method, best, found)
    };
    RunReport {
        objective: objective.clone(),
        epsilon,
        method,
        solution: best.solution,
        cost: best.cost,
        baseline_cost: baseline.cost,
        scheme_feasible,
        diagnostics,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }
}

pub fn eptas_makespan(instance: &Instance, epsilon: Epsilon, budgets: &Budgets) -> RunReport {
    solve(instance, &Objective::Makespan, epsilon, budgets)
}

pub fn eptas_santa(instance: &Instance, epsilon: Epsilon, budgets: &Budgets) -> RunReport {
    solve(instance, &Objective::Santa, epsilon, budgets)
}

pub fn eptas_lp(instance: &Instance, p: model::Exponent, epsilon: Epsilon, budgets: &Budgets) -> RunReport {
    solve(instance, &Objective::Lp(p), epsilon, budgets)
}

/// First strictly best candidate, then the baseline only if strictly better.
fn pick(
    objective: &Objective,
    candidates: Vec<Candidate>,
    baseline: &Candidate,
    method: Method,
) -> (Method, Candidate, bool) {
    let mut best: Option<Candidate> = None;
    for c in candidates {
        if best.as_ref().is_none_or(|b| objective.is_better(&c.cost, &b.cost)) {
            best = Some(c);
        }
    }
    match best {
        Some(b) if !objective.is_better(&baseline.cost, &b.cost) => (method, b, true),
        found => (Method::Baseline, baseline.clone(), found.is_some()),
    }
}

fn baseline(instance: &Instance, objective: &Objective, budgets: &Budgets, diagnostics: &mut Diagnostics) -> Candidate {
    let bags = lpt_bags(instance);
    schedule_all(instance, objective, bags, budgets, diagnostics)
}

fn one_job_per_bag(
    instance: &Instance,
    objective: &Objective,
    budgets: &Budgets,
    diagnostics: &mut Diagnostics,
) -> Candidate {
    let bags = BagAssignment { bag_of: (0..instance.n()).collect() };
    schedule_all(instance, objective, bags, budgets, diagnostics)
}

/// Fixed bags, every scenario scheduled by the exact identical-machines routine.
fn schedule_all(
    instance: &Instance,
    objective: &Objective,
    bags: BagAssignment,
    budgets: &Budgets,
    diagnostics: &mut Diagnostics,
) -> Candidate {
    let sizes = bags.sizes(instance);
    let mut per_scenario = BTreeMap::new();
    for k in instance.support() {
        let best = identical_machines_best(&sizes, k, objective, budgets.schedule_nodes);
        diagnostics.degraded_schedules += best.degraded as usize;
        per_scenario.insert(k, best.assignment);
    }
    let solution = TwoStageSolution { bags, per_scenario };
    let cost = model::expected_cost(instance, &solution, objective).expect("baseline is valid");
    Candidate { solution, cost }
}

/// Per-guess result before merging into the diagnostics.
struct GuessResult {
    record: GuessRecord,
    candidates: Vec<Candidate>,
    extraction_checks: usize,
    extraction_violations: Vec<String>,
    shortcut_checks: Vec<ShortcutCheck>,
    degraded: usize,
}

impl GuessResult {
    fn status(guess: String, status: GuessStatus, note: Option<String>) -> Self {
        Self {
            record: GuessRecord { guess, status, programs: 0, nodes: 0, note },
            candidates: Vec::new(),
            extraction_checks: 0,
            extraction_violations: Vec::new(),
            shortcut_checks: Vec::new(),
            degraded: 0,
        }
    }
}

/// A guess prepared for solving, identified by the program it produces.
struct Prepared<T> {
    label: String,
    signature: String,
    work: T,
}

/// Solves prepared guesses in parallel, skipping repeated signatures, and
/// collects results in input order.
fn run_guesses<T: Send + Sync>(
    prepared: Vec<Result<Prepared<T>, GuessResult>>,
    solve_one: impl Fn(&Prepared<T>) -> GuessResult + Sync,
    pruned: usize,
) -> Harvest {
    let mut first_of: HashMap<String, String> = HashMap::new();
    let mut duplicates: Vec<Option<String>> = Vec::with_capacity(prepared.len());
    for p in &prepared {
        duplicates.push(match p {
            Ok(p) => match first_of.get(&p.signature) {
                Some(first) => Some(first.clone()),
                None => {
                    first_of.insert(p.signature.clone(), p.label.clone());
                    None
                }
            },
            Err(_) => None,
        });
    }
    let results: Vec<GuessResult> = prepared
        .into_par_iter()
        .zip(duplicates)
        .map(|(p, dup)| match (p, dup) {
            (Err(r), _) => r,
            (Ok(p), Some(first)) => {
                GuessResult::status(p.label, GuessStatus::Duplicate, Some(format!("same program as {first}")))
            }
            (Ok(p), None) => solve_one(&p),
        })
        .collect();
    let mut harvest = Harvest::default();
    harvest.diagnostics.pruned = pruned;
    for r in results {
        harvest.diagnostics.record(r.record);
        harvest.diagnostics.extraction_checks += r.extraction_checks;
        harvest.diagnostics.extraction_violations.extend(r.extraction_violations);
        harvest.diagnostics.shortcut_checks.extend(r.shortcut_checks);
        harvest.diagnostics.degraded_schedules += r.degraded;
        harvest.candidates.extend(r.candidates);
    }
    harvest
}

/// Turns a search outcome into a result; `lift` completes each extraction
/// into a full solution.
fn collect_outcome(
    label: String,
    outcome: search::Outcome,
    mut lift: impl FnMut(&Extraction, &mut GuessResult) -> Option<TwoStageSolution>,
    instance: &Instance,
    objective: &Objective,
) -> GuessResult {
    let mut result = GuessResult::status(label.clone(), outcome.status, outcome.note);
    result.record.programs = outcome.programs;
    result.record.nodes = outcome.nodes;
    for e in &outcome.extractions {
        for check in &e.checks {
            result.extraction_checks += 1;
            if !check.holds {
                result.extraction_violations.push(format!(
                    "{label}: scenario {} measured {} against bound {}",
                    check.scenario,
                    check.measured,
                    check.bound.as_ref().map_or("none".into(), crate::rational::format_rational)
                ));
            }
        }
        if let Some(solution) = lift(e, &mut result) {
            let cost = model::expected_cost(instance, &solution, objective).expect("lifted solution is valid");
            result.candidates.push(Candidate { solution, cost });
        }
    }
    result
}

/// Lifts an extraction whose bags follow `pinned` bags of original jobs.
///
/// Pinned bag `i` sits on machine `i` in every routed scenario; the
/// program's machines are shifted past them. Scenarios without a route are
/// left for the caller.
fn lift_with_pinned(
    extraction: &Extraction,
    pinned: &[usize],
    rounded: &RoundedInstance,
    instance: &Instance,
) -> TwoStageSolution {
    let h = pinned.len();
    let mut rs = extraction.solution.clone();
    let mut bags = vec![Vec::new(); h];
    bags.append(&mut rs.bags);
    let mut pins: Vec<Vec<usize>> = pinned.iter().map(|&j| vec![j]).collect();
    pins.append(&mut rs.pinned);
    rs.bags = bags;
    rs.pinned = pins;
    for machines in rs.per_scenario.values_mut() {
        let mut shifted: Vec<usize> = (0..h).collect();
        shifted.extend(machines.iter().map(|&i| i + h));
        *machines = shifted;
    }
    lift_solution(&rs, rounded, instance).expect("extraction accounts for every job")
}

/// Schedules every support scenario missing from `solution` exactly on its bags.
fn fill_missing(
    solution: &mut TwoStageSolution,
    instance: &Instance,
    objective: &Objective,
    budgets: &Budgets,
) -> usize {
    let sizes = solution.bags.sizes(instance);
    let support = instance.support();
    solution.per_scenario.retain(|k, _| support.contains(k));
    let mut degraded = 0;
    for k in support {
        solution.per_scenario.entry(k).or_insert_with(|| {
            let best = identical_machines_best(&sizes, k, objective, budgets.schedule_nodes);
            degraded += best.degraded as usize;
            ScenarioAssignment { k, machine_of: best.assignment.machine_of }
        });
    }
    degraded
}

/// Probability mass of each representative's group.
fn group_weights(
    instance: &Instance,
    reps: &[usize],
    scenarios: &[usize],
    rule: crate::grouping::CopyRule,
) -> Vec<Rational> {
    let mut w = vec![Rational::default(); reps.len()];
    for &k in scenarios {
        if let Some(i) = crate::grouping::representative_of(reps, k, rule) {
            w[i] += instance.prob(k);
        }
    }
    w
}
