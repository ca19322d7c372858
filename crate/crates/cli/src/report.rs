//! JSON reports.
//!
//! A report embeds the instance and the full solution, so its cost can be
//! recomputed from the file alone (see [`recheck`]).

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context};
use bagsched::model::{expected_cost, BagAssignment, Cost, Objective, ScenarioAssignment, TwoStageSolution};
use bagsched::rational::{format_rational, parse_rational};
use bagsched::schemes::RunReport;
use serde_json::{json, Value};

use crate::io::{rational_value, InstanceFile};

pub fn cost_value(cost: &Cost) -> Value {
    json!(cost.display())
}

/// Per-scenario `[q_k, Σ load^p]` pairs of an integer-p lp cost.
fn power_keys_value(cost: &Cost) -> Option<Value> {
    cost.power_keys()
        .map(|terms| terms.iter().map(|(q, key)| json!([rational_value(q), rational_value(key)])).collect())
}

pub fn solution_value(solution: &TwoStageSolution) -> Value {
    let per_scenario: serde_json::Map<String, Value> =
        solution.per_scenario.iter().map(|(k, a)| (k.to_string(), json!(a.machine_of))).collect();
    json!({ "bag_of": solution.bags.bag_of, "per_scenario": per_scenario })
}

/// Report as JSON. With `timing == false` the wall-clock field is left out,
/// which makes reports of identical runs byte-identical.
pub fn report_value(file: &InstanceFile, report: &RunReport, timing: bool) -> Value {
    let mut v = json!({
        "instance": file.to_value(),
        "objective": report.objective.name(),
        "epsilon": report.epsilon.to_string(),
        "method": report.method,
        "cost": cost_value(&report.cost),
        "baseline_cost": cost_value(&report.baseline_cost),
        "scheme_feasible": report.scheme_feasible,
        "solution": solution_value(&report.solution),
        "diagnostics": report.diagnostics,
    });
    let obj = v.as_object_mut().expect("object literal");
    if let Some(p) = report.objective.exponent() {
        obj.insert("p".into(), json!(format_rational(p.value())));
    }
    if let Some(keys) = power_keys_value(&report.cost) {
        obj.insert("power_keys".into(), keys);
    }
    if timing {
        obj.insert("elapsed_ms".into(), json!(report.elapsed_ms));
    }
    v
}

pub fn render(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("plain JSON values");
    text.push('\n');
    text
}

pub fn parse_objective(name: &str, p: Option<&str>) -> anyhow::Result<Objective> {
    match (name, p) {
        ("makespan", None) => Ok(Objective::Makespan),
        ("santa", None) => Ok(Objective::Santa),
        ("lp", Some(p)) => {
            let p = parse_rational(p).ok_or_else(|| anyhow!("cannot parse p = {p:?}"))?;
            Ok(Objective::lp(p)?)
        }
        ("lp", None) => bail!("--objective lp needs --p"),
        ("makespan" | "santa", Some(_)) => bail!("--p only applies to --objective lp"),
        (other, _) => bail!("unknown objective {other:?} (makespan, santa, lp)"),
    }
}

fn usize_list(v: &Value, what: &str) -> anyhow::Result<Vec<usize>> {
    v.as_array()
        .ok_or_else(|| anyhow!("{what}: expected an array"))?
        .iter()
        .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(|| anyhow!("{what}: expected integers")))
        .collect()
}

/// Recomputes the cost of the embedded solution on the embedded instance and
/// compares it with the reported cost.
pub fn recheck(report: &Value) -> anyhow::Result<Cost> {
    let instance = report.get("instance").and_then(Value::as_object).ok_or_else(|| anyhow!("no instance"))?;
    let file = InstanceFile::from_object(instance)?;
    let objective = parse_objective(
        report.get("objective").and_then(Value::as_str).ok_or_else(|| anyhow!("no objective"))?,
        report.get("p").and_then(Value::as_str),
    )?;
    let solution = report.get("solution").ok_or_else(|| anyhow!("no solution"))?;
    let bag_of = usize_list(&solution["bag_of"], "bag_of")?;
    let mut per_scenario = BTreeMap::new();
    for (k, machine_of) in solution["per_scenario"].as_object().ok_or_else(|| anyhow!("no per_scenario"))? {
        let k: usize = k.parse().context("scenario keys are machine counts")?;
        per_scenario.insert(k, ScenarioAssignment { k, machine_of: usize_list(machine_of, "machine_of")? });
    }
    let solution = TwoStageSolution { bags: BagAssignment { bag_of }, per_scenario };
    let cost = expected_cost(&file.instance, &solution, &objective)?;
    let reported = report.get("cost").and_then(Value::as_str).ok_or_else(|| anyhow!("no cost"))?;
    if cost.display() != reported {
        bail!("reported cost {reported} but the solution costs {}", cost.display());
    }
    if let Some(keys) = report.get("power_keys") {
        if Some(keys) != power_keys_value(&cost).as_ref() {
            bail!("power keys do not match the solution");
        }
    }
    Ok(cost)
}

/// Report of a brute-force optimum.
pub fn exact_report_value(
    file: &InstanceFile,
    objective: &Objective,
    solution: &TwoStageSolution,
    cost: &Cost,
    elapsed_ms: Option<u64>,
) -> Value {
    let mut v = json!({
        "instance": file.to_value(),
        "objective": objective.name(),
        "method": bagsched::schemes::Method::Exact,
        "cost": cost_value(cost),
        "solution": solution_value(solution),
    });
    let obj = v.as_object_mut().expect("object literal");
    if let Some(p) = objective.exponent() {
        obj.insert("p".into(), json!(format_rational(p.value())));
    }
    if let Some(keys) = power_keys_value(cost) {
        obj.insert("power_keys".into(), keys);
    }
    if let Some(ms) = elapsed_ms {
        obj.insert("elapsed_ms".into(), json!(ms));
    }
    v
}
