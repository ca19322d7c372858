//! Batch runs over a directory of instance files, one CSV row per
//! (instance, objective).

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use bagsched::model::Objective;
use bagsched::oracle::{exact_solve, OracleBudget};
use bagsched::rounding::Epsilon;
use bagsched::schemes::{solve, Budgets};

use crate::io::InstanceFile;

pub const HEADER: [&str; 9] = [
    "instance",
    "objective",
    "epsilon",
    "scheme_cost",
    "baseline_cost",
    "oracle_cost",
    "ratio",
    "time_ms",
    "diagnostic",
];

pub struct BenchConfig {
    pub objectives: Vec<Objective>,
    pub epsilon: Epsilon,
    pub budgets: Budgets,
    pub oracle: OracleBudget,
}

/// `*.json` files of `dir`, sorted by file name.
pub fn instance_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn objective_label(objective: &Objective) -> String {
    match objective.exponent() {
        Some(p) => format!("lp:{}", bagsched::rational::format_rational(p.value())),
        None => objective.name().to_string(),
    }
}

/// Runs every objective on every instance; failures land in the
/// `diagnostic` column.
pub fn bench(dir: &Path, config: &BenchConfig) -> anyhow::Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(HEADER)?;
    for path in instance_files(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let file = InstanceFile::load(&path);
        for objective in &config.objectives {
            let mut row = vec![name.clone(), objective_label(objective), config.epsilon.to_string()];
            let file = match &file {
                Ok(f) => f,
                Err(e) => {
                    row.extend(["", "", "", "", ""].map(String::from));
                    row.push(format!("{e:#}"));
                    out.write_record(&row)?;
                    continue;
                }
            };
            let start = Instant::now();
            let report = solve(&file.instance, objective, config.epsilon, &config.budgets);
            let time_ms = start.elapsed().as_millis();
            row.push(report.cost.display());
            row.push(report.baseline_cost.display());
            let mut notes = Vec::new();
            if !report.scheme_feasible {
                notes.push("baseline only".to_string());
            }
            let (oracle, ratio) = match exact_solve(&file.instance, objective, &config.oracle) {
                Ok((_, cost)) => {
                    let ratio = report.cost.to_f64() / cost.to_f64();
                    (cost.display(), format!("{ratio:.6}"))
                }
                Err(e) => {
                    notes.push(format!("oracle: {e}"));
                    (String::new(), String::new())
                }
            };
            let diagnostic = notes.join("; ");
            row.extend([oracle, ratio, time_ms.to_string(), diagnostic]);
            out.write_record(&row)?;
        }
    }
    Ok(String::from_utf8(out.into_inner()?)?)
}
