//! Per-guess search over representative bounds.
//!
//! A guess is first solved without bounds. The resulting bags give, for
//! every representative, the exact optimum on those bags; each representative
//! gets a ladder of bounds from its most ambitious value down to that optimum.
//! A single parameter moves all representatives along their ladders at once,
//! so feasibility is monotone in it and bisection finds the best common
//! position. A few best-first programs then try to beat that position.

use std::collections::HashSet;

use crate::grouping::{weighted_sum, RankedHistograms};
use crate::model::Objective;
use crate::rational::{self, Rational};
use crate::rounding::RoundedInstance;
use crate::tcip::{
    build_program, extract_solution, solve_counted, BlockSpec, Configuration, Extraction, Feasibility,
    FeasibilityProgram, ProgramInput, ScenarioRoute, TcipError, Template,
};

use super::{Budgets, GuessStatus};

#[derive(Clone, Debug)]
pub(super) struct Rep {
    pub scenario: usize,
    pub machines: usize,
    /// Probability mass of the scenarios copying this representative.
    pub weight: Rational,
}

/// One rung of a ladder: `rank` orders rungs for the weighted sum, `level`
/// is the block bound handed to the program.
#[derive(Clone, Debug)]
pub(super) struct Rung {
    pub rank: Rational,
    pub level: Rational,
}

pub(super) struct Setup<'a> {
    pub objective: &'a Objective,
    pub rounded: RoundedInstance,
    pub templates: Vec<Template>,
    pub template_units: Vec<i64>,
    pub pool: Vec<Configuration>,
    pub bag_limit: usize,
    pub reps: Vec<Rep>,
    pub routes: Vec<ScenarioRoute>,
}

pub(super) trait Rules {
    /// Pool indices of the configurations that may serve `rep` under `level`.
    fn admitted(&self, rep: usize, level: Option<&Rational>, pool: &[Configuration]) -> Vec<usize>;
    /// Ladder for `rep` ending at the exact optimum on the given allowed bag sizes.
    fn ladder(&self, rep: usize, allowed: &[Rational]) -> Vec<Rung>;
}

pub(super) struct Outcome {
    pub status: GuessStatus,
    pub programs: usize,
    pub nodes: u64,
    pub extractions: Vec<Extraction>,
    pub note: Option<String>,
}

struct Runner<'a, R: Rules> {
    setup: &'a Setup<'a>,
    rules: &'a R,
    budgets: &'a Budgets,
    programs: usize,
    nodes: u64,
    extractions: Vec<Extraction>,
}

enum Attempt {
    Feasible,
    Infeasible,
    Budget(String),
}

impl<R: Rules> Runner<'_, R> {
    fn program(&self, levels: Option<&[Rational]>) -> Result<FeasibilityProgram, TcipError> {
        let s = self.setup;
        let blocks = s
            .reps
            .iter()
            .enumerate()
            .map(|(i, rep)| {
                let level = levels.map(|l| &l[i]);
                BlockSpec {
                    scenario: rep.scenario,
                    machines: rep.machines,
                    bound: level.cloned(),
                    configs: self.rules.admitted(i, level, &s.pool),
                }
            })
            .collect();
        build_program(&ProgramInput {
            objective: s.objective,
            templates: &s.templates,
            template_units: &s.template_units,
            unit: s.rounded.grid.unit(),
            pool: &s.pool,
            class_counts: &s.rounded.counts,
            bag_limit: s.bag_limit,
            blocks,
        })
    }

    fn attempt(&mut self, levels: Option<&[Rational]>) -> Attempt {
        let program = match self.program(levels) {
            Ok(p) => p,
            Err(e) => return Attempt::Budget(e.to_string()),
        };
        self.programs += 1;
        let (result, used) = solve_counted(&program, self.budgets.ip_nodes);
        self.nodes += used;
        match result {
            Feasibility::Feasible(point) => {
                let s = self.setup;
                self.extractions.push(extract_solution(
                    &point,
                    &program,
                    &s.templates,
                    &s.template_units,
                    &s.pool,
                    &s.rounded,
                    &s.routes,
                    s.objective,
                ));
                Attempt::Feasible
            }
            Feasibility::Infeasible => Attempt::Infeasible,
            Feasibility::BudgetExceeded => Attempt::Budget(format!("node limit {}", self.budgets.ip_nodes)),
        }
    }
}

pub(super) fn run<R: Rules>(setup: &Setup, rules: &R, budgets: &Budgets) -> Outcome {
    let mut runner = Runner { setup, rules, budgets, programs: 0, nodes: 0, extractions: Vec::new() };
    let finish = |runner: Runner<R>, status, note| Outcome {
        status,
        programs: runner.programs,
        nodes: runner.nodes,
        extractions: runner.extractions,
        note,
    };
    match runner.attempt(None) {
        Attempt::Feasible => {}
        Attempt::Infeasible => return finish(runner, GuessStatus::Infeasible, None),
        Attempt::Budget(why) => return finish(runner, GuessStatus::BudgetExceeded, Some(why)),
    }
    if setup.reps.is_empty() {
        return finish(runner, GuessStatus::Feasible, None);
    }

    let unit = setup.rounded.grid.unit();
    let loose = &runner.extractions[0];
    let allowed: Vec<Rational> = loose.bag_units.iter().map(|&u| &unit * rational::int(u)).collect();
    let ladders: Vec<Vec<Rung>> = (0..setup.reps.len()).map(|i| rules.ladder(i, &allowed)).collect();
    if ladders.iter().any(Vec::is_empty) {
        return finish(runner, GuessStatus::Feasible, Some("empty ladder".into()));
    }
    let weights: Vec<Rational> = setup.reps.iter().map(|r| r.weight.clone()).collect();
    let top = ladders.iter().map(|l| l.len() - 1).max().unwrap_or(0);
    let position = |t: usize| -> Vec<usize> {
        ladders.iter().map(|l| (t * (l.len() - 1)).checked_div(top).unwrap_or(0)).collect()
    };
    let levels_of =
        |idx: &[usize]| -> Vec<Rational> { idx.iter().zip(&ladders).map(|(&i, l)| l[i].level.clone()).collect() };
    let ranks_of =
        |idx: &[usize]| -> Vec<Rational> { idx.iter().zip(&ladders).map(|(&i, l)| l[i].rank.clone()).collect() };

    let mut tried: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<Vec<usize>> = None;
    let (mut lo, mut hi) = (0, top);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let idx = position(mid);
        tried.insert(idx.clone());
        if matches!(runner.attempt(Some(&levels_of(&idx))), Attempt::Feasible) {
            hi = mid;
            best = Some(idx);
        } else {
            lo = mid + 1;
        }
    }
    if best.is_none() {
        let idx = position(top);
        tried.insert(idx.clone());
        if matches!(runner.attempt(Some(&levels_of(&idx))), Attempt::Feasible) {
            best = Some(idx);
        }
    }

    if let Some(best) = best.filter(|_| budgets.refine_programs > 0) {
        let maximize = setup.objective.maximizes();
        let best_sum = weighted_sum(&weights, &ranks_of(&best));
        let rank_lists: Vec<Vec<Rational>> =
            ladders.iter().map(|l| l.iter().map(|r| r.rank.clone()).collect()).collect();
        let monotone = !matches!(setup.objective, Objective::Lp(_));
        let mut spent = 0;
        for (ranks, sum) in RankedHistograms::new(rank_lists, weights.clone(), maximize, monotone) {
            let better = if maximize { sum > best_sum } else { sum < best_sum };
            if !better || spent == budgets.refine_programs {
                break;
            }
            let idx: Vec<usize> = ranks
                .iter()
                .zip(&ladders)
                .map(|(r, l)| l.iter().position(|rung| &rung.rank == r).expect("rank from this ladder"))
                .collect();
            if !tried.insert(idx.clone()) {
                continue;
            }
            spent += 1;
            if matches!(runner.attempt(Some(&levels_of(&idx))), Attempt::Feasible) {
                break;
            }
        }
    }
    finish(runner, GuessStatus::Feasible, None)
}
