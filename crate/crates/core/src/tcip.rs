//! Template/configuration integer programs: enumeration, construction, an
//! exact bounded feasibility search and extraction of schedules.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::Range;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::model::Objective;
use crate::rational::{self, Rational};
use crate::rounding::{RoundedInstance, RoundedSolution};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TcipError {
    #[error("more than {0} templates")]
    TooManyTemplates(usize),
    #[error("more than {0} configurations")]
    TooManyConfigurations(usize),
    #[error("power-row coefficient does not fit in 64 bits")]
    CoefficientOverflow,
}

/// A multiset of rounded job sizes sharing one bag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub counts: Vec<u32>,
    pub total: Rational,
}

impl Template {
    pub fn jobs(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Nonempty class-count vectors within both caps, in lexicographic order.
pub fn enumerate_templates(
    classes: &[Rational],
    counts: &[usize],
    total_cap: &Rational,
    job_cap: usize,
    ceiling: usize,
) -> Result<Vec<Template>, TcipError> {
    assert_eq!(classes.len(), counts.len());
    struct Walk<'a> {
        classes: &'a [Rational],
        counts: &'a [usize],
        total_cap: &'a Rational,
        job_cap: usize,
        ceiling: usize,
        current: Vec<u32>,
        out: Vec<Template>,
    }
    impl Walk<'_> {
        fn go(&mut self, class: usize, total: Rational, jobs: usize) -> Result<(), TcipError> {
            if class == self.classes.len() {
                if jobs > 0 {
                    if self.out.len() == self.ceiling {
                        return Err(TcipError::TooManyTemplates(self.ceiling));
                    }
                    self.out.push(Template { counts: self.current.clone(), total });
                }
                return Ok(());
            }
            let mut t = total;
            for c in 0..=self.counts[class] {
                if c > 0 {
                    t += &self.classes[class];
                }
                if &t > self.total_cap || jobs + c > self.job_cap {
                    break;
                }
                self.current[class] = c as u32;
                self.go(class + 1, t.clone(), jobs + c)?;
            }
            self.current[class] = 0;
            Ok(())
        }
    }
    let mut walk =
        Walk { classes, counts, total_cap, job_cap, ceiling, current: vec![0; classes.len()], out: Vec::new() };
    walk.go(0, Rational::zero(), 0)?;
    Ok(walk.out)
}

/// A multiset of templates sharing one machine. `units` is the total allowed
/// size of its templates in grid units.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub templates: Vec<(usize, u32)>,
    pub units: i64,
}

impl Configuration {
    pub fn count(&self, template: usize) -> u32 {
        self.templates.iter().find(|(t, _)| *t == template).map_or(0, |(_, c)| *c)
    }

    pub fn size(&self) -> u32 {
        self.templates.iter().map(|(_, c)| c).sum()
    }

    pub fn allowed_total(&self, unit: &Rational) -> Rational {
        unit * rational::int(self.units)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScreenMode {
    AtMost,
    AtLeast,
    Unscreened,
}

impl ScreenMode {
    pub fn admits(self, units: i64, bound_units: i64) -> bool {
        match self {
            ScreenMode::AtMost => units <= bound_units,
            ScreenMode::AtLeast => units >= bound_units,
            ScreenMode::Unscreened => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PoolLimits<'a> {
    /// Most templates on one machine.
    pub template_cap: usize,
    /// Jobs available per class; configurations needing more are skipped.
    pub class_counts: Option<&'a [usize]>,
    /// Skip configurations whose allowed total exceeds this many units.
    pub max_units: Option<i64>,
    pub include_empty: bool,
    pub ceiling: usize,
}

/// All template multisets within the limits, each listed once.
pub fn configuration_pool(
    templates: &[Template],
    template_units: &[i64],
    limits: &PoolLimits,
) -> Result<Vec<Configuration>, TcipError> {
    assert_eq!(templates.len(), template_units.len());
    struct Walk<'a> {
        templates: &'a [Template],
        units: &'a [i64],
        limits: &'a PoolLimits<'a>,
        current: Vec<(usize, u32)>,
        used: Vec<usize>,
        out: Vec<Configuration>,
    }
    impl Walk<'_> {
        fn go(&mut self, start: usize, size: usize, units: i64) -> Result<(), TcipError> {
            if !self.current.is_empty() || self.limits.include_empty {
                if self.out.len() == self.limits.ceiling {
                    return Err(TcipError::TooManyConfigurations(self.limits.ceiling));
                }
                self.out.push(Configuration { templates: self.current.clone(), units });
            }
            if size == self.limits.template_cap {
                return Ok(());
            }
            for t in start..self.templates.len() {
                let next_units = units + self.units[t];
                if self.limits.max_units.is_some_and(|m| next_units > m) {
                    continue;
                }
                let counts = &self.templates[t].counts;
                if let Some(avail) = self.limits.class_counts {
                    if counts.iter().enumerate().any(|(l, &c)| self.used[l] + c as usize > avail[l]) {
                        continue;
                    }
                }
                for (l, &c) in counts.iter().enumerate() {
                    self.used[l] += c as usize;
                }
                match self.current.last_mut() {
                    Some((last, c)) if *last == t => *c += 1,
                    _ => self.current.push((t, 1)),
                }
                let result = self.go(t, size + 1, next_units);
                match self.current.last_mut() {
                    Some((_, c)) if *c > 1 => *c -= 1,
                    _ => {
                        self.current.pop();
                    }
                }
                for (l, &c) in counts.iter().enumerate() {
                    self.used[l] -= c as usize;
                }
                result?;
            }
            Ok(())
        }
    }
    let classes = templates.first().map_or(0, |t| t.counts.len());
    let mut walk =
        Walk { templates, units: template_units, limits, current: Vec::new(), used: vec![0; classes], out: Vec::new() };
    walk.go(0, 0, 0)?;
    Ok(walk.out)
}

/// Configurations with at most `template_cap` templates passing the screen
/// against `bound_units`. The empty configuration is kept unless the mode
/// asks for a positive lower bound.
pub fn enumerate_configurations(
    templates: &[Template],
    template_units: &[i64],
    template_cap: usize,
    bound_units: i64,
    mode: ScreenMode,
    ceiling: usize,
) -> Result<Vec<Configuration>, TcipError> {
    let limits = PoolLimits {
        template_cap,
        class_counts: None,
        max_units: (mode == ScreenMode::AtMost).then_some(bound_units),
        include_empty: !(mode == ScreenMode::AtLeast && bound_units > 0),
        ceiling,
    };
    let pool = configuration_pool(templates, template_units, &limits)?;
    Ok(pool.into_iter().filter(|c| mode.admits(c.units, bound_units)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarName {
    Template(usize),
    Config { block: usize, config: usize },
    Free(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: VarName,
    pub upper: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    BagLimit,
    Class(usize),
    Machines(usize),
    Coupling { block: usize, template: usize },
    Power(usize),
    Other,
}

/// `Σ coef·x  (≤|=|≥)  rhs` with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub kind: RowKind,
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: Rational,
}

impl Row {
    /// Clears denominators so that the coefficients become integers.
    pub fn from_rational(terms: &[(usize, Rational)], sense: Sense, rhs: Rational) -> Option<Self> {
        let lcm = rational::common_denominator(terms.iter().map(|(_, c)| c));
        let scale = Rational::from_integer(lcm);
        let terms = terms
            .iter()
            .map(|(v, c)| (c * &scale).to_integer().to_i64().map(|c| (*v, c)))
            .collect::<Option<Vec<_>>>()?;
        Some(Row { kind: RowKind::Other, terms, sense, rhs: rhs * scale })
    }

    pub fn holds(&self, point: &[i64]) -> bool {
        let lhs: BigInt = self.terms.iter().map(|&(v, c)| BigInt::from(c) * point[v]).sum();
        let lhs = Rational::from_integer(lhs);
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Eq => lhs == self.rhs,
            Sense::Ge => lhs >= self.rhs,
        }
    }
}

/// One scenario block of the program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub scenario: usize,
    pub machines: usize,
    /// Bound on the allowed-size schedule: the makespan cap, the Santa Claus
    /// floor, or for lp the budget on `Σ load^p`. `None` leaves it unconstrained.
    pub bound: Option<Rational>,
    /// Pool indices of the configurations, in variable order.
    pub configs: Vec<usize>,
    pub vars: Range<usize>,
}

/// `lo ≤ Σ w_t·y_t ≤ hi` over template variables.
type ImpliedRow = (Vec<(usize, i64)>, i128, i128);

#[derive(Clone, Debug)]
struct BlockIndex {
    lookup: HashMap<Vec<(usize, u32)>, usize>,
    power: Option<(Vec<i64>, Rational)>,
    /// Rows over template counts implied by this block: `lo ≤ Σ w_t·y_t ≤ hi`.
    implied: Vec<ImpliedRow>,
}

#[derive(Clone, Debug)]
struct Structure {
    /// Variable of each template.
    template_var: Vec<usize>,
    template_cap: usize,
    blocks: Vec<BlockIndex>,
}

#[derive(Clone, Debug)]
pub struct FeasibilityProgram {
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    pub blocks: Vec<Block>,
    structure: Option<Structure>,
}

impl FeasibilityProgram {
    pub fn new(variables: Vec<Variable>, rows: Vec<Row>) -> Self {
        for row in &rows {
            assert!(row.terms.iter().all(|&(v, _)| v < variables.len()), "undeclared variable");
        }
        Self { variables, rows, blocks: Vec::new(), structure: None }
    }

    /// The same program without template/configuration structure, so that
    /// the solver treats it as a plain bounded system.
    pub fn without_structure(&self) -> Self {
        Self { structure: None, ..self.clone() }
    }

    pub fn is_satisfied(&self, point: &[i64]) -> bool {
        point.len() == self.variables.len()
            && point.iter().zip(&self.variables).all(|(&x, v)| (0..=v.upper).contains(&x))
            && self.rows.iter().all(|r| r.holds(point))
    }

    pub fn var_label(&self, v: usize) -> String {
        match self.variables[v].name {
            VarName::Template(t) => format!("y{t}"),
            VarName::Config { block, config } => format!("x{block}_{config}"),
            VarName::Free(i) => format!("v{i}"),
        }
    }

    /// Plain-text listing: one bound per line, then one constraint per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (v, var) in self.variables.iter().enumerate() {
            let _ = writeln!(out, "0 <= {} <= {}", self.var_label(v), var.upper);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let lhs = if row.terms.is_empty() {
                "0".to_string()
            } else {
                row.terms.iter().map(|&(v, c)| format!("{c} {}", self.var_label(v))).collect::<Vec<_>>().join(" + ")
            };
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, "r{i}: {lhs} {op} {}", rational::format_rational(&row.rhs));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub scenario: usize,
    pub machines: usize,
    pub bound: Option<Rational>,
    pub configs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ProgramInput<'a> {
    pub objective: &'a Objective,
    pub templates: &'a [Template],
    pub template_units: &'a [i64],
    pub unit: Rational,
    pub pool: &'a [Configuration],
    pub class_counts: &'a [usize],
    pub bag_limit: usize,
    pub blocks: Vec<BlockSpec>,
}

/// Relative safety margin of the power row for non-integer exponents.
pub const POWER_MARGIN: f64 = 1e-9;

/// The template/configuration system: bag limit, class equalities, one
/// machine-count row and one coupling row per template for every block, and
/// the power row for lp objectives.
pub fn build_program(input: &ProgramInput) -> Result<FeasibilityProgram, TcipError> {
    let n_templates = input.templates.len();
    let mut order: Vec<usize> = (0..n_templates).collect();
    order.sort_by(|&a, &b| input.templates[b].total.cmp(&input.templates[a].total).then(a.cmp(&b)));

    let mut variables = Vec::new();
    let mut template_var = vec![0; n_templates];
    for &t in &order {
        let counts = &input.templates[t].counts;
        let upper = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, &c)| input.class_counts[l] / c as usize)
            .min()
            .unwrap_or(0)
            .min(input.bag_limit);
        template_var[t] = variables.len();
        variables.push(Variable { name: VarName::Template(t), upper: upper as i64 });
    }

    let mut rows = Vec::new();
    rows.push(Row {
        kind: RowKind::BagLimit,
        terms: order.iter().map(|&t| (template_var[t], 1)).collect(),
        sense: Sense::Le,
        rhs: rational::int(input.bag_limit as i64),
    });
    for (l, &n) in input.class_counts.iter().enumerate() {
        rows.push(Row {
            kind: RowKind::Class(l),
            terms: order
                .iter()
                .filter(|&&t| input.templates[t].counts[l] > 0)
                .map(|&t| (template_var[t], input.templates[t].counts[l] as i64))
                .collect(),
            sense: Sense::Eq,
            rhs: rational::int(n as i64),
        });
    }

    let mut blocks = Vec::new();
    let mut indices = Vec::new();
    let mut template_cap = 0;
    for (b, block_spec) in input.blocks.iter().enumerate() {
        let first = variables.len();
        let mut per_template: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n_templates];
        let mut lookup = HashMap::new();
        for (local, &ci) in block_spec.configs.iter().enumerate() {
            let config = &input.pool[ci];
            template_cap = template_cap.max(config.size() as usize);
            let var = variables.len();
            let upper = config
                .templates
                .iter()
                .map(|&(t, c)| variables[template_var[t]].upper / c as i64)
                .min()
                .unwrap_or(i64::MAX)
                .min(block_spec.machines as i64);
            variables.push(Variable { name: VarName::Config { block: b, config: ci }, upper });
            for &(t, c) in &config.templates {
                per_template[t].push((var, c as i64));
            }
            lookup.insert(config.templates.clone(), local);
        }
        let vars = first..variables.len();
        rows.push(Row {
            kind: RowKind::Machines(b),
            terms: vars.clone().map(|v| (v, 1)).collect(),
            sense: Sense::Eq,
            rhs: rational::int(block_spec.machines as i64),
        });
        for &t in &order {
            let mut terms = std::mem::take(&mut per_template[t]);
            terms.push((template_var[t], -1));
            rows.push(Row {
                kind: RowKind::Coupling { block: b, template: t },
                terms,
                sense: Sense::Eq,
                rhs: Rational::zero(),
            });
        }
        let power = match (input.objective, &block_spec.bound) {
            (Objective::Lp(p), Some(budget)) => {
                let units: Vec<i64> = block_spec.configs.iter().map(|&ci| input.pool[ci].units).collect();
                let (coefs, rhs) = power_row(&units, budget, &input.unit, p.integer(), p.to_f64())?;
                rows.push(Row {
                    kind: RowKind::Power(b),
                    terms: vars.clone().zip(coefs.iter().copied()).collect(),
                    sense: Sense::Le,
                    rhs: rhs.clone(),
                });
                Some((coefs, rhs))
            }
            _ => None,
        };
        let implied = implied_rows(input, block_spec, power.as_ref(), &template_var);
        indices.push(BlockIndex { lookup, power, implied });
        blocks.push(Block {
            scenario: block_spec.scenario,
            machines: block_spec.machines,
            bound: block_spec.bound.clone(),
            configs: block_spec.configs.clone(),
            vars,
        });
    }
    Ok(FeasibilityProgram {
        variables,
        rows,
        blocks,
        structure: Some(Structure { template_var, template_cap, blocks: indices }),
    })
}

/// Template-count rows that follow from one block.
///
/// Coupling and machine rows give `Σ_t w_t·y_t = Σ_c (Σ_t c_t·w_t)·x_c` for
/// any weights, so with exactly `machines` configurations the left side lies
/// between `machines` times the smallest and largest configuration weight.
/// For lp, superadditive power coefficients bound `Σ_t units_t^p·y_t` by the
/// power budget and Hölder's inequality caps the total allowed size.
fn implied_rows(
    input: &ProgramInput,
    block_spec: &BlockSpec,
    power: Option<&(Vec<i64>, Rational)>,
    template_var: &[usize],
) -> Vec<ImpliedRow> {
    let machines = block_spec.machines as i128;
    let configs: Vec<&Configuration> = block_spec.configs.iter().map(|&c| &input.pool[c]).collect();
    let all_templates = || 0..input.templates.len();
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (i128::MAX, i128::MIN);
    let (mut slo, mut shi) = (i128::MAX, i128::MIN);
    for c in &configs {
        lo = lo.min(c.units as i128);
        hi = hi.max(c.units as i128);
        slo = slo.min(c.size() as i128);
        shi = shi.max(c.size() as i128);
    }
    if configs.is_empty() {
        // No configuration at all: the machine row cannot hold.
        return vec![(Vec::new(), 1, 0)];
    }
    rows.push((
        all_templates().map(|t| (template_var[t], input.template_units[t])).collect(),
        machines * lo,
        machines * hi,
    ));
    rows.push((all_templates().map(|t| (template_var[t], 1)).collect(), machines * slo, machines * shi));
    if let (Some((coefs, rhs)), Objective::Lp(p)) = (power, input.objective) {
        let cap = clamp(&rational::floor_int(rhs));
        let pf = p.to_f64();
        let singles: Option<Vec<i64>> = match p.integer() {
            Some(pi) => input.template_units.iter().map(|&u| u.checked_pow(pi)).collect(),
            None => {
                let largest = configs.iter().map(|c| c.units).max().unwrap_or(1).max(1);
                let lead = coefs
                    .iter()
                    .zip(&configs)
                    .find(|(_, c)| c.units == largest)
                    .map(|(&k, _)| k as f64 / (largest as f64).powf(pf));
                lead.map(|scale| {
                    input
                        .template_units
                        .iter()
                        .map(|&u| ((u as f64).powf(pf) * scale * (1.0 - 1e-9)).floor() as i64)
                        .collect()
                })
            }
        };
        if let Some(w) = singles {
            let dominated = configs.iter().zip(coefs).all(|(c, &a)| {
                let sum: i128 = c.templates.iter().map(|&(t, k)| k as i128 * w[t] as i128).sum();
                sum <= a as i128
            });
            if dominated {
                rows.push((all_templates().map(|t| (template_var[t], w[t])).collect(), NEG_INF, cap));
            }
        }
        let scale_f = coefs
            .iter()
            .zip(&configs)
            .filter(|(_, c)| c.units > 0)
            .map(|(&a, c)| a as f64 / (c.units as f64).powf(pf))
            .fold(f64::INFINITY, f64::min);
        if scale_f.is_finite() && scale_f > 0.0 {
            let budget = rational::to_f64(rhs) / scale_f;
            let total = (block_spec.machines as f64).powf(1.0 - 1.0 / pf) * budget.max(0.0).powf(1.0 / pf);
            if total.is_finite() {
                let cap = (total * (1.0 + 1e-9)).floor() as i128 + 1;
                rows.push((
                    all_templates().map(|t| (template_var[t], input.template_units[t])).collect(),
                    NEG_INF,
                    cap,
                ));
            }
        }
    }
    rows
}

/// Coefficients and right-hand side of `Σ s(c)^p·x ≤ budget` in grid units.
/// For a non-integer exponent both sides are scaled and rounded so that any
/// integer solution satisfies the real inequality with the safety margin.
fn power_row(
    units: &[i64],
    budget: &Rational,
    unit: &Rational,
    integer_p: Option<u32>,
    p: f64,
) -> Result<(Vec<i64>, Rational), TcipError> {
    if let Some(p) = integer_p {
        let coefs = units
            .iter()
            .map(|&s| s.checked_pow(p).ok_or(TcipError::CoefficientOverflow))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok((coefs, budget / rational::pow_u(unit, p)));
    }
    let largest = units.iter().map(|&s| (s as f64).powf(p)).fold(1.0, f64::max);
    let shift = 40 - largest.log2().ceil() as i32;
    let scale = 2f64.powi(shift);
    let coefs = units
        .iter()
        .map(|&s| {
            let c = ((s as f64).powf(p) * scale * (1.0 + 1e-12)).ceil();
            if c.is_finite() && c < i64::MAX as f64 {
                Ok(c as i64)
            } else {
                Err(TcipError::CoefficientOverflow)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let w = rational::to_f64(budget) / rational::to_f64(unit).powf(p) * scale * (1.0 - POWER_MARGIN);
    let rhs = if w.is_finite() {
        Rational::from_integer(BigInt::from(w.floor() as i128))
    } else {
        Rational::from_integer(BigInt::from(i128::MAX))
    };
    Ok((coefs, rhs))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(Vec<i64>),
    Infeasible,
    BudgetExceeded,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

struct Budget {
    used: u64,
    limit: u64,
}

impl Budget {
    fn spend(&mut self) -> bool {
        self.used += 1;
        self.used <= self.limit
    }
}

const NEG_INF: i128 = i128::MIN / 4;
const POS_INF: i128 = i128::MAX / 4;

struct IRow {
    terms: Vec<(u32, i64)>,
    lo: i128,
    hi: i128,
    span: i128,
}

fn clamp(v: &BigInt) -> i128 {
    v.to_i128().map_or(if v.is_negative() { NEG_INF } else { POS_INF }, |x| x.clamp(NEG_INF, POS_INF))
}

/// Integer bounds of a row, or `None` when no integer point can meet it.
fn row_range(sense: Sense, rhs: &Rational) -> Option<(i128, i128)> {
    match sense {
        Sense::Le => Some((NEG_INF, clamp(&rational::floor_int(rhs)))),
        Sense::Ge => Some((clamp(&rational::ceil_int(rhs)), POS_INF)),
        Sense::Eq => rhs.is_integer().then(|| {
            let v = clamp(&rhs.to_integer());
            (v, v)
        }),
    }
}

enum Verdict {
    Accept,
    Reject,
    Abort,
}

enum End {
    Accepted,
    Exhausted,
    Aborted,
}

/// Depth-first search over the box with bounds propagation.
/// Integer row for the propagation engine; `None` marks an infeasible row.
type EngineRow = (Vec<(u32, i64)>, Option<(i128, i128)>);

struct Engine {
    lo: Vec<i64>,
    hi: Vec<i64>,
    rows: Vec<IRow>,
    cols: Vec<Vec<(u32, i64)>>,
    minact: Vec<i128>,
    maxact: Vec<i128>,
    trail: Vec<(u32, i64, i64)>,
    queue: Vec<u32>,
    queued: Vec<bool>,
    contradiction: bool,
}

impl Engine {
    fn new(upper: Vec<i64>, rows: Vec<EngineRow>) -> Self {
        let n = upper.len();
        let mut cols = vec![Vec::new(); n];
        let mut irows = Vec::with_capacity(rows.len());
        let mut contradiction = false;
        for (r, (mut terms, range)) in rows.into_iter().enumerate() {
            terms.retain(|&(_, a)| a != 0);
            let (lo, hi) = range.unwrap_or_else(|| {
                contradiction = true;
                (0, 0)
            });
            let mut span = 0i128;
            for &(v, a) in &terms {
                cols[v as usize].push((r as u32, a));
                span = span.max((a as i128).abs() * upper[v as usize] as i128);
            }
            irows.push(IRow { terms, lo, hi, span });
        }
        let mut minact = vec![0i128; irows.len()];
        let mut maxact = vec![0i128; irows.len()];
        for (r, row) in irows.iter().enumerate() {
            for &(v, a) in &row.terms {
                let ext = a as i128 * upper[v as usize] as i128;
                if a > 0 {
                    maxact[r] += ext;
                } else {
                    minact[r] += ext;
                }
            }
        }
        let m = irows.len();
        Self {
            lo: vec![0; n],
            hi: upper,
            rows: irows,
            cols,
            minact,
            maxact,
            trail: Vec::new(),
            queue: (0..m as u32).collect(),
            queued: vec![true; m],
            contradiction,
        }
    }

    fn apply(&mut self, v: usize, nlo: i64, nhi: i64) {
        let (olo, ohi) = (self.lo[v], self.hi[v]);
        for &(r, a) in &self.cols[v] {
            let (r, a) = (r as usize, a as i128);
            if a > 0 {
                self.minact[r] += a * (nlo - olo) as i128;
                self.maxact[r] += a * (nhi - ohi) as i128;
            } else {
                self.minact[r] += a * (nhi - ohi) as i128;
                self.maxact[r] += a * (nlo - olo) as i128;
            }
        }
        self.lo[v] = nlo;
        self.hi[v] = nhi;
    }

    fn tighten(&mut self, v: usize, nlo: i64, nhi: i64) -> bool {
        let nlo = nlo.max(self.lo[v]);
        let nhi = nhi.min(self.hi[v]);
        if nlo > nhi {
            return false;
        }
        if nlo == self.lo[v] && nhi == self.hi[v] {
            return true;
        }
        self.trail.push((v as u32, self.lo[v], self.hi[v]));
        self.apply(v, nlo, nhi);
        for i in 0..self.cols[v].len() {
            let r = self.cols[v][i].0;
            if !self.queued[r as usize] {
                self.queued[r as usize] = true;
                self.queue.push(r);
            }
        }
        true
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (v, lo, hi) = self.trail.pop().expect("trail entry");
            self.apply(v as usize, lo, hi);
        }
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r as usize] = false;
        }
    }

    fn propagate(&mut self) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r as usize] = false;
            if !self.propagate_row(r as usize) {
                self.clear_queue();
                return false;
            }
        }
        true
    }

    fn propagate_row(&mut self, r: usize) -> bool {
        let (lo, hi, span) = (self.rows[r].lo, self.rows[r].hi, self.rows[r].span);
        if self.minact[r] > hi || self.maxact[r] < lo {
            return false;
        }
        let upper_slack = if hi < POS_INF { hi - self.minact[r] } else { POS_INF };
        let lower_slack = if lo > NEG_INF { self.maxact[r] - lo } else { POS_INF };
        if upper_slack >= span && lower_slack >= span {
            return true;
        }
        for i in 0..self.rows[r].terms.len() {
            let (v, a) = self.rows[r].terms[i];
            let (v, a) = (v as usize, a as i128);
            if hi < POS_INF {
                let slack = hi - self.minact[r];
                if slack < 0 {
                    return false;
                }
                let (vlo, vhi) = (self.lo[v] as i128, self.hi[v] as i128);
                let ok = if a > 0 {
                    let cap = vlo + slack / a;
                    cap >= vhi || self.tighten(v, vlo as i64, cap as i64)
                } else {
                    let floor = vhi - slack / -a;
                    floor <= vlo || self.tighten(v, floor as i64, vhi as i64)
                };
                if !ok {
                    return false;
                }
            }
            if lo > NEG_INF {
                let slack = self.maxact[r] - lo;
                if slack < 0 {
                    return false;
                }
                let (vlo, vhi) = (self.lo[v] as i128, self.hi[v] as i128);
                let ok = if a > 0 {
                    let floor = vhi - slack / a;
                    floor <= vlo || self.tighten(v, floor as i64, vhi as i64)
                } else {
                    let cap = vlo + slack / -a;
                    cap >= vhi || self.tighten(v, vlo as i64, cap as i64)
                };
                if !ok {
                    return false;
                }
            }
        }
        self.minact[r] <= hi && self.maxact[r] >= lo
    }

    /// Visits fixed points in lexicographic order (variables in index order,
    /// values ascending) until `leaf` accepts one.
    fn search(&mut self, budget: &mut Budget, leaf: &mut dyn FnMut(&[i64], &mut Budget) -> Verdict) -> End {
        struct Frame {
            var: usize,
            next: i64,
            last: i64,
            mark: usize,
        }
        if self.contradiction || !self.propagate() {
            return End::Exhausted;
        }
        let n = self.lo.len();
        let mut stack: Vec<Frame> = Vec::new();
        let mut pos = 0;
        'descend: loop {
            while pos < n && self.lo[pos] == self.hi[pos] {
                pos += 1;
            }
            if pos == n {
                match leaf(&self.lo, budget) {
                    Verdict::Accept => return End::Accepted,
                    Verdict::Abort => return End::Aborted,
                    Verdict::Reject => {}
                }
            } else {
                stack.push(Frame { var: pos, next: self.lo[pos], last: self.hi[pos], mark: self.trail.len() });
            }
            loop {
                let Some(frame) = stack.last_mut() else {
                    return End::Exhausted;
                };
                if frame.next > frame.last {
                    let mark = frame.mark;
                    stack.pop();
                    self.undo_to(mark);
                    continue;
                }
                let (v, value, mark) = (frame.var, frame.next, frame.mark);
                frame.next += 1;
                if !budget.spend() {
                    return End::Aborted;
                }
                self.undo_to(mark);
                if self.tighten(v, value, value) && self.propagate() {
                    pos = v + 1;
                    continue 'descend;
                }
                self.clear_queue();
            }
        }
    }
}

fn engine_rows(rows: &[&Row], remap: impl Fn(usize) -> Option<u32>) -> Vec<EngineRow> {
    rows.iter()
        .map(|row| {
            let terms = row.terms.iter().map(|&(v, c)| (remap(v).expect("row variable is mapped"), c)).collect();
            (terms, row_range(row.sense, &row.rhs))
        })
        .collect()
}

/// Exact feasibility: a point satisfying every row, a proof that none exists
/// in the box, or an explicit budget overrun after `node_limit` branchings.
pub fn solve_feasibility(program: &FeasibilityProgram, node_limit: u64) -> Feasibility {
    solve_counted(program, node_limit).0
}

/// Like [`solve_feasibility`], also returning the number of branchings used.
pub fn solve_counted(program: &FeasibilityProgram, node_limit: u64) -> (Feasibility, u64) {
    let mut budget = Budget { used: 0, limit: node_limit };
    let outcome = match &program.structure {
        Some(structure) => solve_structured(program, structure, &mut budget),
        None => solve_plain(program, &mut budget),
    };
    if let Feasibility::Feasible(point) = &outcome {
        assert!(program.is_satisfied(point), "solver returned a point violating the program");
    }
    (outcome, budget.used.min(node_limit))
}

fn solve_plain(program: &FeasibilityProgram, budget: &mut Budget) -> Feasibility {
    let upper = program.variables.iter().map(|v| v.upper).collect();
    let rows: Vec<&Row> = program.rows.iter().collect();
    let mut engine = Engine::new(upper, engine_rows(&rows, |v| Some(v as u32)));
    let mut found = None;
    let end = engine.search(budget, &mut |point, _| {
        found = Some(point.to_vec());
        Verdict::Accept
    });
    match end {
        End::Accepted => Feasibility::Feasible(found.expect("accepted point")),
        End::Exhausted => Feasibility::Infeasible,
        End::Aborted => Feasibility::BudgetExceeded,
    }
}

/// Template counts first; once they are fixed each block only involves the
/// configurations made of the opened bags, which are solved separately.
fn solve_structured(program: &FeasibilityProgram, structure: &Structure, budget: &mut Budget) -> Feasibility {
    let n_templates = structure.template_var.len();
    let is_template = |v: usize| v < n_templates;
    let template_rows: Vec<&Row> =
        program.rows.iter().filter(|r| r.terms.iter().all(|&(v, _)| is_template(v))).collect();
    let upper = program.variables[..n_templates].iter().map(|v| v.upper).collect();
    let mut rows = engine_rows(&template_rows, |v| Some(v as u32));
    for index in &structure.blocks {
        for (terms, lo, hi) in &index.implied {
            let terms = terms.iter().map(|&(v, w)| (v as u32, w)).collect();
            rows.push((terms, Some((*lo, *hi))));
        }
    }
    let mut engine = Engine::new(upper, rows);
    let mut var_template = vec![0; n_templates];
    for (t, &v) in structure.template_var.iter().enumerate() {
        var_template[v] = t;
    }

    let mut found: Option<Vec<i64>> = None;
    let end = engine.search(budget, &mut |ys, budget| {
        let mut opened: Vec<(usize, u32)> =
            ys.iter().enumerate().filter(|(_, &y)| y > 0).map(|(v, &y)| (var_template[v], y as u32)).collect();
        opened.sort_unstable();
        let mut point = vec![0i64; program.variables.len()];
        point[..n_templates].copy_from_slice(ys);
        for (b, block) in program.blocks.iter().enumerate() {
            match solve_block(block, &structure.blocks[b], &opened, structure.template_cap, budget) {
                BlockResult::Solved(xs) => {
                    for (local, x) in xs {
                        point[block.vars.start + local] = x;
                    }
                }
                BlockResult::Impossible => return Verdict::Reject,
                BlockResult::Budget => return Verdict::Abort,
            }
        }
        found = Some(point);
        Verdict::Accept
    });
    match end {
        End::Accepted => Feasibility::Feasible(found.expect("accepted point")),
        End::Exhausted => Feasibility::Infeasible,
        End::Aborted => Feasibility::BudgetExceeded,
    }
}

enum BlockResult {
    Solved(Vec<(usize, i64)>),
    Impossible,
    Budget,
}

/// Sub-multisets of `opened` with at most `cap` elements, as sorted lists.
fn sub_multisets(opened: &[(usize, u32)], cap: usize) -> Vec<Vec<(usize, u32)>> {
    let mut out = vec![Vec::new()];
    for &(t, y) in opened {
        let mut next = Vec::new();
        for base in &out {
            let size: u32 = base.iter().map(|(_, c)| c).sum();
            for c in 0..=y {
                if (size + c) as usize > cap {
                    break;
                }
                let mut m = base.clone();
                if c > 0 {
                    m.push((t, c));
                }
                next.push(m);
            }
        }
        out = next;
    }
    out
}

fn solve_block(
    block: &Block,
    index: &BlockIndex,
    opened: &[(usize, u32)],
    cap: usize,
    budget: &mut Budget,
) -> BlockResult {
    let candidates: Vec<(usize, &Vec<(usize, u32)>)> = sub_multisets(opened, cap)
        .into_iter()
        .filter_map(|m| index.lookup.get_key_value(&m).map(|(k, &local)| (local, k)))
        .collect();
    let n = candidates.len();
    let upper = vec![block.machines as i64; n];
    let mut rows: Vec<EngineRow> = Vec::new();
    let machines = block.machines as i128;
    rows.push(((0..n as u32).map(|i| (i, 1)).collect(), Some((machines, machines))));
    for &(t, y) in opened {
        let terms = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, (_, c))| c.iter().find(|(tt, _)| *tt == t).map(|&(_, k)| (i as u32, k as i64)))
            .collect();
        rows.push((terms, Some((y as i128, y as i128))));
    }
    if let Some((coefs, rhs)) = &index.power {
        let terms = candidates.iter().enumerate().map(|(i, (local, _))| (i as u32, coefs[*local])).collect();
        rows.push((terms, row_range(Sense::Le, rhs)));
    }
    let mut engine = Engine::new(upper, rows);
    let mut found = None;
    let end = engine.search(budget, &mut |xs, _| {
        found = Some(xs.to_vec());
        Verdict::Accept
    });
    match end {
        End::Accepted => {
            let xs = found.expect("accepted point");
            BlockResult::Solved(candidates.iter().zip(xs).map(|((local, _), x)| (*local, x)).collect())
        }
        End::Exhausted => BlockResult::Impossible,
        End::Aborted => BlockResult::Budget,
    }
}

/// Scenario `scenario` with `machines` machines follows the configurations of `block`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioRoute {
    pub scenario: usize,
    pub machines: usize,
    pub block: usize,
}

/// Whether a block's own schedule, measured with allowed bag sizes, meets its bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCheck {
    pub scenario: usize,
    pub bound: Option<Rational>,
    pub measured: String,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub solution: RoundedSolution,
    /// Allowed size of each opened bag, in grid units.
    pub bag_units: Vec<i64>,
    pub checks: Vec<BlockCheck>,
}

impl Extraction {
    pub fn all_checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Opens the bags chosen by the template counts, fills them with rounded
/// jobs and schedules every routed scenario after its block's configurations.
///
/// Routes with more machines than their block leave the extra machines
/// empty; routes with fewer fold the surplus machines' bags onto the least
/// loaded remaining machine.
#[allow(clippy::too_many_arguments)]
pub fn extract_solution(
    point: &[i64],
    program: &FeasibilityProgram,
    templates: &[Template],
    template_units: &[i64],
    pool: &[Configuration],
    rounded: &RoundedInstance,
    routes: &[ScenarioRoute],
    objective: &Objective,
) -> Extraction {
    assert!(program.is_satisfied(point), "extraction from an infeasible point");
    let mut class_queues: Vec<std::collections::VecDeque<usize>> =
        (0..rounded.classes.len()).map(|l| rounded.jobs_of_class(l).into()).collect();
    let mut bags: Vec<Vec<usize>> = Vec::new();
    let mut bag_units = Vec::new();
    let mut bags_of_template: Vec<Vec<usize>> = vec![Vec::new(); templates.len()];
    for (v, var) in program.variables.iter().enumerate() {
        let VarName::Template(t) = var.name else { continue };
        for _ in 0..point[v] {
            let mut contents = Vec::new();
            for (l, &c) in templates[t].counts.iter().enumerate() {
                for _ in 0..c {
                    contents.push(class_queues[l].pop_front().expect("class count matches the program"));
                }
            }
            bags_of_template[t].push(bags.len());
            bags.push(contents);
            bag_units.push(template_units[t]);
        }
    }
    assert!(class_queues.iter().all(|q| q.is_empty()), "rounded jobs left unplaced");

    // Machine contents of every block.
    let block_machines: Vec<Vec<Vec<usize>>> = program
        .blocks
        .iter()
        .map(|block| {
            let mut next = vec![0usize; templates.len()];
            let mut machines = Vec::new();
            for (local, &ci) in block.configs.iter().enumerate() {
                for _ in 0..point[block.vars.start + local] {
                    let mut on_machine = Vec::new();
                    for &(t, c) in &pool[ci].templates {
                        for _ in 0..c {
                            on_machine.push(bags_of_template[t][next[t]]);
                            next[t] += 1;
                        }
                    }
                    machines.push(on_machine);
                }
            }
            assert_eq!(machines.len(), block.machines, "machine count row violated");
            machines
        })
        .collect();

    let unit = rounded.grid.unit();
    let mut per_scenario = BTreeMap::new();
    let mut checks = Vec::new();
    for route in routes {
        let block = &program.blocks[route.block];
        let machines = &block_machines[route.block];
        let mut machine_of = vec![usize::MAX; bags.len()];
        let mut loads = vec![0i64; route.machines.max(1)];
        for (i, contents) in machines.iter().enumerate().take(route.machines) {
            for &bag in contents {
                machine_of[bag] = i;
                loads[i] += bag_units[bag];
            }
        }
        for contents in machines.iter().skip(route.machines) {
            for &bag in contents {
                let target = (0..route.machines).min_by_key(|&i| (loads[i], i)).expect("at least one machine");
                machine_of[bag] = target;
                loads[target] += bag_units[bag];
            }
        }
        assert!(machine_of.iter().all(|&i| i != usize::MAX), "bag without machine");
        if route.scenario == block.scenario {
            checks.push(check_block(objective, block, &loads[..route.machines], &unit));
        }
        per_scenario.insert(route.scenario, machine_of);
    }
    let pinned = vec![Vec::new(); bags.len()];
    Extraction { solution: RoundedSolution { bags, pinned, per_scenario }, bag_units, checks }
}

fn check_block(objective: &Objective, block: &Block, loads: &[i64], unit: &Rational) -> BlockCheck {
    let (measured, holds) = match objective {
        Objective::Makespan => {
            let max = unit * rational::int(loads.iter().copied().max().unwrap_or(0));
            let holds = block.bound.as_ref().is_none_or(|w| &max <= w);
            (rational::format_rational(&max), holds)
        }
        Objective::Santa => {
            let min = unit * rational::int(loads.iter().copied().min().unwrap_or(0));
            let holds = block.bound.as_ref().is_none_or(|w| &min >= w);
            (rational::format_rational(&min), holds)
        }
        Objective::Lp(p) => match p.integer() {
            Some(p) => {
                let sum: BigInt = loads.iter().map(|&l| num_traits::pow::pow(BigInt::from(l), p as usize)).sum();
                let lhs = Rational::from_integer(sum) * rational::pow_u(unit, p);
                let holds = block.bound.as_ref().is_none_or(|b| &lhs <= b);
                (rational::format_rational(&lhs), holds)
            }
            None => {
                let pf = p.to_f64();
                let u = rational::to_f64(unit);
                let lhs: f64 = loads.iter().map(|&l| (l as f64 * u).powf(pf)).sum();
                let holds = block.bound.as_ref().is_none_or(|b| lhs <= rational::to_f64(b) * (1.0 + 1e-9));
                (format!("{lhs:e}"), holds)
            }
        },
    };
    BlockCheck { scenario: block.scenario, bound: block.bound.clone(), measured, holds }
}

/// The representative serving each scenario under the copy rule of `objective`.
pub fn routes_for(scenarios: &[usize], representatives: &[usize], maximize: bool) -> Vec<ScenarioRoute> {
    let rule = if maximize { crate::grouping::CopyRule::Right } else { crate::grouping::CopyRule::Left };
    scenarios
        .iter()
        .filter_map(|&k| {
            crate::grouping::representative_of(representatives, k, rule).map(|block| ScenarioRoute {
                scenario: k,
                machines: k,
                block,
            })
        })
        .collect()
}

/// Exhaustive search over the box; exponential, for cross-checking.
pub fn brute_force_feasible(program: &FeasibilityProgram) -> bool {
    let n = program.variables.len();
    let mut point = vec![0i64; n];
    loop {
        if program.rows.iter().all(|r| r.holds(&point)) {
            return true;
        }
        let mut i = 0;
        loop {
            if i == n {
                return false;
            }
            if point[i] < program.variables[i].upper {
                point[i] += 1;
                break;
            }
            point[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Exponent, Objective};
    use crate::rational::{int, ratio};
    use crate::rounding::{Direction, Epsilon, JobGroup, Merged, SizeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn template_examples() {
        let t = enumerate_templates(&[int(1), int(2)], &[2, 1], &int(2), 2, 100).unwrap();
        let counts: Vec<Vec<u32>> = t.iter().map(|t| t.counts.clone()).collect();
        assert_eq!(counts, vec![vec![0, 1], vec![1, 0], vec![2, 0]]);
        assert!(enumerate_templates(&[int(3)], &[2], &int(2), 2, 100).unwrap().is_empty());
        let t = enumerate_templates(&[int(1)], &[3], &int(2), 3, 100).unwrap();
        let counts: Vec<Vec<u32>> = t.iter().map(|t| t.counts.clone()).collect();
        assert_eq!(counts, vec![vec![1], vec![2]]);
        assert_eq!(enumerate_templates(&[int(1)], &[3], &int(2), 3, 1), Err(TcipError::TooManyTemplates(1)));
    }

    fn one_template() -> Vec<Template> {
        vec![Template { counts: vec![1], total: int(1) }]
    }

    #[test]
    fn configuration_examples() {
        let sizes = |cs: Vec<Configuration>| cs.iter().map(|c| c.size()).collect::<Vec<_>>();
        let t = one_template();
        assert_eq!(sizes(enumerate_configurations(&t, &[1], 2, 2, ScreenMode::AtMost, 100).unwrap()), vec![0, 1, 2]);
        assert_eq!(sizes(enumerate_configurations(&t, &[1], 2, 2, ScreenMode::AtLeast, 100).unwrap()), vec![2]);
        assert_eq!(
            sizes(enumerate_configurations(&t, &[1], 2, 2, ScreenMode::Unscreened, 100).unwrap()),
            vec![0, 1, 2]
        );
        assert_eq!(
            enumerate_configurations(&t, &[1], 2, 2, ScreenMode::Unscreened, 2),
            Err(TcipError::TooManyConfigurations(2))
        );
    }

    #[test]
    fn pool_respects_class_counts() {
        let templates =
            vec![Template { counts: vec![1, 0], total: int(2) }, Template { counts: vec![0, 1], total: int(1) }];
        let limits = PoolLimits {
            template_cap: 3,
            class_counts: Some(&[1, 2]),
            max_units: None,
            include_empty: false,
            ceiling: 100,
        };
        let pool = configuration_pool(&templates, &[2, 1], &limits).unwrap();
        assert!(pool.iter().all(|c| c.count(0) <= 1 && c.count(1) <= 2));
        assert_eq!(pool.len(), 5);
    }

    fn forced_rounded() -> RoundedInstance {
        let grid = SizeGrid::new(int(1), Epsilon::new(5).unwrap(), -4..=20, true, Direction::Up);
        let merged = Merged {
            jobs: vec![JobGroup { size: int(1), members: vec![0] }, JobGroup { size: int(1), members: vec![1] }],
            leftover: None,
        };
        RoundedInstance::build(merged, grid)
    }

    fn forced_program(objective: &Objective) -> (FeasibilityProgram, Vec<Template>, Vec<Configuration>) {
        let templates = one_template();
        let pool = vec![Configuration { templates: vec![(0, 2)], units: 50 }];
        let input = ProgramInput {
            objective,
            templates: &templates,
            template_units: &[25],
            unit: ratio(1, 25),
            pool: &pool,
            class_counts: &[2],
            bag_limit: 2,
            blocks: vec![BlockSpec { scenario: 2, machines: 1, bound: Some(int(2)), configs: vec![0] }],
        };
        (build_program(&input).unwrap(), templates, pool)
    }

    #[test]
    fn forced_system_has_unique_point() {
        let objective = Objective::Makespan;
        let (program, _, _) = forced_program(&objective);
        assert_eq!(solve_feasibility(&program, 1000), Feasibility::Feasible(vec![2, 1]));
        assert_eq!(solve_feasibility(&program.without_structure(), 1000), Feasibility::Feasible(vec![2, 1]));
        let dump = program.dump();
        assert!(dump.contains("r1: 1 y0 = 2"), "{dump}");
    }

    #[test]
    fn uncovered_class_is_infeasible() {
        let objective = Objective::Makespan;
        let input = ProgramInput {
            objective: &objective,
            templates: &[],
            template_units: &[],
            unit: int(1),
            pool: &[],
            class_counts: &[1],
            bag_limit: 2,
            blocks: vec![],
        };
        let program = build_program(&input).unwrap();
        assert_eq!(solve_feasibility(&program, 1000), Feasibility::Infeasible);
    }

    #[test]
    fn coupling_rows_for_every_block() {
        let objective = Objective::Makespan;
        let templates =
            vec![Template { counts: vec![1, 0], total: int(2) }, Template { counts: vec![0, 1], total: int(1) }];
        let pool = configuration_pool(
            &templates,
            &[2, 1],
            &PoolLimits { template_cap: 2, class_counts: None, max_units: None, include_empty: true, ceiling: 100 },
        )
        .unwrap();
        let all: Vec<usize> = (0..pool.len()).collect();
        let input = ProgramInput {
            objective: &objective,
            templates: &templates,
            template_units: &[2, 1],
            unit: int(1),
            pool: &pool,
            class_counts: &[1, 1],
            bag_limit: 2,
            blocks: vec![
                BlockSpec { scenario: 1, machines: 1, bound: Some(int(3)), configs: all.clone() },
                BlockSpec { scenario: 2, machines: 2, bound: Some(int(2)), configs: all },
            ],
        };
        let program = build_program(&input).unwrap();
        let coupling = program.rows.iter().filter(|r| matches!(r.kind, RowKind::Coupling { .. })).count();
        assert_eq!(coupling, 4);
        assert!(solve_feasibility(&program, 10_000).is_feasible());
    }

    #[test]
    fn extraction_of_forced_system() {
        let objective = Objective::Makespan;
        let (program, templates, pool) = forced_program(&objective);
        let rounded = forced_rounded();
        let point = vec![2, 1];
        let routes = [ScenarioRoute { scenario: 2, machines: 2, block: 0 }];
        let ex = extract_solution(&point, &program, &templates, &[25], &pool, &rounded, &routes, &objective);
        assert_eq!(ex.solution.bags, vec![vec![0], vec![1]]);
        // Both bags on the single configured machine; scenario 2 has one idle machine.
        assert_eq!(ex.solution.per_scenario[&2], vec![0, 0]);
        assert!(ex.all_checks_hold());
    }

    #[test]
    fn split_and_folded_routes() {
        let objective = Objective::Makespan;
        let templates = one_template();
        let pool =
            vec![Configuration { templates: vec![], units: 0 }, Configuration { templates: vec![(0, 1)], units: 25 }];
        let input = ProgramInput {
            objective: &objective,
            templates: &templates,
            template_units: &[25],
            unit: ratio(1, 25),
            pool: &pool,
            class_counts: &[2],
            bag_limit: 2,
            blocks: vec![BlockSpec { scenario: 2, machines: 2, bound: Some(int(1)), configs: vec![0, 1] }],
        };
        let program = build_program(&input).unwrap();
        let Feasibility::Feasible(point) = solve_feasibility(&program, 1000) else { panic!("feasible") };
        let rounded = forced_rounded();
        let routes = [
            ScenarioRoute { scenario: 2, machines: 2, block: 0 },
            ScenarioRoute { scenario: 3, machines: 3, block: 0 },
            ScenarioRoute { scenario: 1, machines: 1, block: 0 },
        ];
        let ex = extract_solution(&point, &program, &templates, &[25], &pool, &rounded, &routes, &objective);
        assert_eq!(ex.solution.per_scenario[&2], vec![0, 1]);
        assert_eq!(ex.solution.per_scenario[&3], vec![0, 1]);
        assert_eq!(ex.solution.per_scenario[&1], vec![0, 0]);
        assert!(ex.all_checks_hold());

        let santa = Objective::Santa;
        let input = ProgramInput { objective: &santa, ..input };
        let program = build_program(&input).unwrap();
        let Feasibility::Feasible(point) = solve_feasibility(&program, 1000) else { panic!("feasible") };
        let ex = extract_solution(&point, &program, &templates, &[25], &pool, &rounded, &routes[..1], &santa);
        let mut used = ex.solution.per_scenario[&2].clone();
        used.sort_unstable();
        assert_eq!(used, vec![0, 1]);
    }

    #[test]
    fn power_row_for_integer_and_fractional_exponents() {
        let (c, rhs) = power_row(&[2, 3], &int(64), &int(2), Some(2), 2.0).unwrap();
        assert_eq!(c, vec![4, 9]);
        assert_eq!(rhs, int(16));
        let (c, rhs) = power_row(&[2, 3], &int(8), &int(1), None, 1.5).unwrap();
        let (c0, c1, w) = (c[0] as f64, c[1] as f64, rational::to_f64(&rhs));
        assert!((c1 / c0 - 1.5f64.powf(1.5)).abs() < 1e-9);
        // Scaled bound sits just below the true one: (4/2)^1.5 relative to 2^1.5.
        let ratio_to_true = (w / c0) / 2f64.powf(1.5);
        assert!(ratio_to_true < 1.0 && ratio_to_true > 1.0 - 1e-8);
        assert!(power_row(&[1 << 40], &int(1), &int(1), Some(3), 3.0).is_err());
    }

    #[test]
    fn lp_block_respects_power_row() {
        let objective = Objective::Lp(Exponent::new(int(2)).unwrap());
        let templates = one_template();
        let pool = vec![
            Configuration { templates: vec![], units: 0 },
            Configuration { templates: vec![(0, 1)], units: 1 },
            Configuration { templates: vec![(0, 2)], units: 2 },
        ];
        let base = ProgramInput {
            objective: &objective,
            templates: &templates,
            template_units: &[1],
            unit: int(1),
            pool: &pool,
            class_counts: &[2],
            bag_limit: 2,
            blocks: vec![BlockSpec { scenario: 2, machines: 2, bound: Some(int(4)), configs: vec![0, 1, 2] }],
        };
        // loads (1,1): 2 ≤ 4; (2,0): 4 ≤ 4
        assert!(solve_feasibility(&build_program(&base).unwrap(), 1000).is_feasible());
        let tight = ProgramInput {
            blocks: vec![BlockSpec { scenario: 2, machines: 2, bound: Some(int(1)), configs: vec![0, 1, 2] }],
            ..base.clone()
        };
        // budget 1 < 2
        assert_eq!(solve_feasibility(&build_program(&tight).unwrap(), 1000), Feasibility::Infeasible);
    }

    fn random_program(rng: &mut ChaCha8Rng) -> FeasibilityProgram {
        let n = rng.random_range(1..=12);
        let variables: Vec<Variable> =
            (0..n).map(|i| Variable { name: VarName::Free(i), upper: rng.random_range(0..=4) }).collect();
        let rows = (0..rng.random_range(1..=4))
            .map(|_| {
                let mut terms: Vec<(usize, Rational)> = Vec::new();
                for v in 0..n {
                    if rng.random_bool(0.5) {
                        terms.push((v, ratio(rng.random_range(-3..=3), rng.random_range(1..=2))));
                    }
                }
                let sense = match rng.random_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Eq,
                    _ => Sense::Ge,
                };
                Row::from_rational(&terms, sense, ratio(rng.random_range(-4..=8), rng.random_range(1..=2))).unwrap()
            })
            .collect();
        FeasibilityProgram::new(variables, rows)
    }

    #[test]
    fn solver_agrees_with_box_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut feasible = 0;
        for _ in 0..600 {
            let program = random_program(&mut rng);
            let expect = brute_force_feasible(&program);
            match solve_feasibility(&program, u64::MAX) {
                Feasibility::Feasible(p) => {
                    assert!(expect);
                    assert!(program.is_satisfied(&p));
                    feasible += 1;
                }
                Feasibility::Infeasible => assert!(!expect, "{}", program.dump()),
                Feasibility::BudgetExceeded => unreachable!(),
            }
        }
        assert!(feasible > 50 && feasible < 550, "mix of outcomes: {feasible}");
    }

    #[test]
    fn budget_is_explicit() {
        // 2·Σx = 7 has no integer solution but propagation alone cannot see it.
        let variables = (0..8).map(|i| Variable { name: VarName::Free(i), upper: 4 }).collect();
        let rows =
            vec![Row { kind: RowKind::Other, terms: (0..8).map(|v| (v, 2)).collect(), sense: Sense::Eq, rhs: int(7) }];
        let program = FeasibilityProgram::new(variables, rows);
        assert_eq!(solve_feasibility(&program, 10), Feasibility::BudgetExceeded);
        assert_eq!(solve_feasibility(&program, u64::MAX), Feasibility::Infeasible);
    }

    #[test]
    fn structured_and_plain_search_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            let classes: Vec<Rational> = (0..rng.random_range(1..=3)).map(|i| int(3 - i)).collect();
            let counts: Vec<usize> = classes.iter().map(|_| rng.random_range(1..=2)).collect();
            let templates = enumerate_templates(&classes, &counts, &int(4), 3, 1000).unwrap();
            let units: Vec<i64> = templates.iter().map(|t| rational::ceil_int(&t.total).to_i64().unwrap()).collect();
            let pool = configuration_pool(
                &templates,
                &units,
                &PoolLimits {
                    template_cap: 2,
                    class_counts: Some(&counts),
                    max_units: None,
                    include_empty: true,
                    ceiling: 10_000,
                },
            )
            .unwrap();
            let machines = rng.random_range(1..=3);
            let bound = rng.random_range(2..=6);
            let configs: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].units <= bound).collect();
            let objective =
                if rng.random_bool(0.5) { Objective::Makespan } else { Objective::Lp(Exponent::new(int(2)).unwrap()) };
            let input = ProgramInput {
                objective: &objective,
                templates: &templates,
                template_units: &units,
                unit: int(1),
                pool: &pool,
                class_counts: &counts,
                bag_limit: rng.random_range(1..=4),
                blocks: vec![BlockSpec {
                    scenario: machines,
                    machines,
                    bound: Some(if matches!(objective, Objective::Lp(_)) { int(bound * bound) } else { int(bound) }),
                    configs,
                }],
            };
            let program = build_program(&input).unwrap();
            let a = solve_feasibility(&program, u64::MAX);
            let b = solve_feasibility(&program.without_structure(), u64::MAX);
            assert_eq!(a.is_feasible(), b.is_feasible(), "{}", program.dump());
        }
    }
}
