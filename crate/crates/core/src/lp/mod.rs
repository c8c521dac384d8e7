//! The LP upper bound on long-run average match value.
//!
//! One variable `alpha[x][y]` per ordered type pair: the fraction of type-`y`
//! arrivals that match a type-`x` agent already waiting in the market.
//!
//! ```text
//! maximize   sum_{x,y} v_xy * alpha_xy * lambda_y
//! subject to alpha_xy <= lambda_x / mu_x                                  (cap)
//!            sum_y alpha_xy lambda_y + sum_y alpha_yx lambda_x <= lambda_x (flow)
//!            0 <= alpha_xy <= 1                                           (box)
//! ```
//!
//! Variables whose row type is impatient are fixed to zero at build time.

pub mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketInstance;

pub use simplex::{maximize, SimplexOutcome, SimplexStatus};

pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Cap { x: usize, y: usize },
    Flow { x: usize },
    Box { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub coefficients: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_types: usize,
    pub labels: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub fixed_zero: Vec<bool>,
}

impl LinearProgram {
    pub fn var(&self, x: usize, y: usize) -> usize {
        x * self.num_types + y
    }

    pub fn num_vars(&self) -> usize {
        self.num_types * self.num_types
    }

    pub fn count(&self, pred: impl Fn(&ConstraintKind) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.kind)).count()
    }

    /// Plain-text dump of the program in `A x <= b` form.
    pub fn tableau_dump(&self) -> String {
        let n = self.num_types;
        let name = |v: usize| format!("a[{},{}]", self.labels[v / n], self.labels[v % n]);
        let mut s = String::new();
        let _ = writeln!(s, "# LP-UB: maximize c.x subject to A x <= b, x >= 0");
        let _ = writeln!(s, "types {}", self.labels.join(" "));
        let vars: Vec<_> = (0..self.num_vars()).map(name).collect();
        let _ = writeln!(s, "vars {}", vars.join(" "));
        let fixed: Vec<_> = (0..self.num_vars())
            .filter(|&v| self.fixed_zero[v])
            .map(name)
            .collect();
        let _ = writeln!(s, "fixed_zero {}", fixed.join(" "));
        let row = |coeffs: &[f64]| {
            coeffs
                .iter()
                .map(|c| format!("{c:>12.6}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "{:<16} {}", "objective", row(&self.objective));
        for c in &self.constraints {
            let label = match c.kind {
                ConstraintKind::Cap { x, y } => format!("cap[{},{}]", self.labels[x], self.labels[y]),
                ConstraintKind::Flow { x } => format!("flow[{}]", self.labels[x]),
                ConstraintKind::Box { x, y } => format!("box[{},{}]", self.labels[x], self.labels[y]),
            };
            let _ = writeln!(s, "{label:<16} {} <= {}", row(&c.coefficients), c.bound);
        }
        s
    }
}

pub fn build_lp(instance: &MarketInstance) -> Result<LinearProgram> {
    instance.ensure_valid()?;
    let n = instance.num_types();
    let var = |x: usize, y: usize| x * n + y;
    let mut objective = vec![0.0; n * n];
    let mut fixed_zero = vec![false; n * n];
    for x in 0..n {
        for y in 0..n {
            objective[var(x, y)] = instance.values.get(x, y) * instance.arrival_rate(y);
            fixed_zero[var(x, y)] = instance.departure_rate(x).is_infinite();
        }
    }
    let mut constraints = Vec::new();
    for x in 0..n {
        let cap = instance.pressure(x)?;
        for y in 0..n {
            if fixed_zero[var(x, y)] {
                continue;
            }
            let mut coefficients = vec![0.0; n * n];
            coefficients[var(x, y)] = 1.0;
            constraints.push(Constraint {
                kind: ConstraintKind::Cap { x, y },
                coefficients,
                bound: cap,
            });
        }
    }
    for x in 0..n {
        let lx = instance.arrival_rate(x);
        let mut coefficients = vec![0.0; n * n];
        for y in 0..n {
            coefficients[var(x, y)] += instance.arrival_rate(y);
            coefficients[var(y, x)] += lx;
        }
        constraints.push(Constraint {
            kind: ConstraintKind::Flow { x },
            coefficients,
            bound: lx,
        });
    }
    for x in 0..n {
        for y in 0..n {
            if fixed_zero[var(x, y)] {
                continue;
            }
            let mut coefficients = vec![0.0; n * n];
            coefficients[var(x, y)] = 1.0;
            constraints.push(Constraint {
                kind: ConstraintKind::Box { x, y },
                coefficients,
                bound: 1.0,
            });
        }
    }
    Ok(LinearProgram {
        num_types: n,
        labels: instance.types.iter().map(|t| t.label.clone()).collect(),
        objective,
        constraints,
        fixed_zero,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub num_types: usize,
    /// Row-major `alpha[x * n + y]`.
    pub alpha: Vec<f64>,
    pub value: f64,
    pub status: LpStatus,
}

impl LpSolution {
    pub fn alpha(&self, x: usize, y: usize) -> f64 {
        self.alpha[x * self.num_types + y]
    }

    pub fn zeros(num_types: usize) -> Self {
        Self {
            num_types,
            alpha: vec![0.0; num_types * num_types],
            value: 0.0,
            status: LpStatus::Optimal,
        }
    }

    /// Objective value of an arbitrary `alpha` for `instance`.
    pub fn objective_of(instance: &MarketInstance, alpha: &[f64]) -> f64 {
        let n = instance.num_types();
        let mut total = 0.0;
        for x in 0..n {
            for y in 0..n {
                total += instance.values.get(x, y) * alpha[x * n + y] * instance.arrival_rate(y);
            }
        }
        total
    }

    pub fn to_json(&self, labels: &[String]) -> Result<String> {
        let n = self.num_types;
        let doc = LpSolutionDoc {
            schema_version: SCHEMA_VERSION,
            status: self.status,
            value: self.value,
            types: labels.to_vec(),
            alpha: (0..n).map(|x| self.alpha[x * n..(x + 1) * n].to_vec()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LpSolutionDoc = serde_json::from_str(text)?;
        let n = doc.alpha.len();
        if let Some(row) = doc.alpha.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        Ok(Self {
            num_types: n,
            alpha: doc.alpha.concat(),
            value: doc.value,
            status: doc.status,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LpSolutionDoc {
    schema_version: u32,
    status: LpStatus,
    value: f64,
    types: Vec<String>,
    alpha: Vec<Vec<f64>>,
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let a: Vec<Vec<f64>> = lp.constraints.iter().map(|c| c.coefficients.clone()).collect();
    let b: Vec<f64> = lp.constraints.iter().map(|c| c.bound).collect();
    let out = maximize(&lp.objective, &a, &b, &lp.fixed_zero)?;
    let status = match out.status {
        SimplexStatus::Optimal => LpStatus::Optimal,
        SimplexStatus::Infeasible => LpStatus::Infeasible,
        SimplexStatus::Unbounded => LpStatus::Unbounded,
    };
    // round-off can leave basic variables at -1e-17
    let alpha: Vec<f64> = out.x.iter().map(|&v| if v < 0.0 && v > -1e-12 { 0.0 } else { v }).collect();
    let value = lp.objective.iter().zip(&alpha).map(|(c, a)| c * a).sum();
    Ok(LpSolution {
        num_types: lp.num_types,
        alpha,
        value,
        status,
    })
}

/// Builds and solves the LP for `instance`, failing unless the result is optimal.
pub fn solve_instance(instance: &MarketInstance) -> Result<LpSolution> {
    let sol = solve_lp(&build_lp(instance)?)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpNotOptimal(sol.status.as_str()));
    }
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackRow {
    pub constraint: String,
    /// `bound - lhs`; negative means violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub rows: Vec<SlackRow>,
    pub worst_violation: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn slack(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.constraint == name).map(|r| r.slack)
    }
}

/// Evaluates every LP-UB constraint at `solution.alpha`. Constraint names are
/// `cap[x,y]`, `flow[x]`, `lower[x,y]`, `upper[x,y]` with type indices.
pub fn check_feasibility(
    instance: &MarketInstance,
    solution: &LpSolution,
    tolerance: f64,
) -> Result<FeasibilityReport> {
    let n = instance.num_types();
    if solution.num_types != n || solution.alpha.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: solution.alpha.len(),
        });
    }
    let a = |x: usize, y: usize| solution.alpha[x * n + y];
    let mut rows = Vec::new();
    for x in 0..n {
        let cap = instance.pressure(x)?;
        for y in 0..n {
            rows.push(SlackRow {
                constraint: format!("cap[{x},{y}]"),
                slack: cap - a(x, y),
            });
        }
    }
    for x in 0..n {
        let lx = instance.arrival_rate(x);
        let lhs: f64 = (0..n)
            .map(|y| a(x, y) * instance.arrival_rate(y) + a(y, x) * lx)
            .sum();
        rows.push(SlackRow {
            constraint: format!("flow[{x}]"),
            slack: lx - lhs,
        });
    }
    for x in 0..n {
        for y in 0..n {
            rows.push(SlackRow {
                constraint: format!("lower[{x},{y}]"),
                slack: a(x, y),
            });
            rows.push(SlackRow {
                constraint: format!("upper[{x},{y}]"),
                slack: 1.0 - a(x, y),
            });
        }
    }
    let worst_violation = rows.iter().map(|r| (-r.slack).max(0.0)).fold(0.0, f64::max);
    Ok(FeasibilityReport {
        rows,
        worst_violation,
        feasible: worst_violation <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::DepartureRate::{Finite, Infinite};

    fn single() -> MarketInstance {
        MarketInstance::new([("x".to_string(), 1.0, Finite(1.0))], [(0, 0, 1.0)])
    }

    fn patient_impatient() -> MarketInstance {
        MarketInstance::new(
            [
                ("a".to_string(), 1.0, Finite(1.0)),
                ("b".to_string(), 1.0, Infinite),
            ],
            [(0, 1, 1.0)],
        )
    }

    #[test]
    fn constraint_counts() {
        let lp = build_lp(&single()).unwrap();
        assert_eq!(lp.num_vars(), 1);
        assert_eq!(lp.count(|k| matches!(k, ConstraintKind::Cap { .. })), 1);
        assert_eq!(lp.count(|k| matches!(k, ConstraintKind::Flow { .. })), 1);
        assert_eq!(lp.count(|k| matches!(k, ConstraintKind::Box { .. })), 1);
        let flow = lp
            .constraints
            .iter()
            .find(|c| matches!(c.kind, ConstraintKind::Flow { .. }))
            .unwrap();
        assert_eq!(flow.coefficients, vec![2.0]);

        let three = MarketInstance::new(
            (0..3).map(|i| (format!("t{i}"), 1.0 + i as f64, Finite(1.0))),
            [],
        );
        let lp = build_lp(&three).unwrap();
        assert_eq!(lp.num_vars(), 9);
        assert!(lp.count(|k| matches!(k, ConstraintKind::Cap { .. })) <= 9);
        assert_eq!(lp.count(|k| matches!(k, ConstraintKind::Flow { .. })), 3);
    }

    #[test]
    fn impatient_rows_fixed() {
        let lp = build_lp(&patient_impatient()).unwrap();
        assert_eq!(lp.fixed_zero, vec![false, false, true, true]);
        assert!(!lp
            .constraints
            .iter()
            .any(|c| matches!(c.kind, ConstraintKind::Cap { x: 1, .. })));
    }

    #[test]
    fn single_type_half() {
        let sol = solve_instance(&single()).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!((sol.alpha(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn patient_impatient_one() {
        let sol = solve_instance(&patient_impatient()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((sol.alpha(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(sol.alpha(1, 0), 0.0);
        assert_eq!(sol.alpha(1, 1), 0.0);
    }

    #[test]
    fn zero_values() {
        let inst = MarketInstance::new([("x".to_string(), 1.0, Finite(2.0))], []);
        let sol = solve_instance(&inst).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.alpha, vec![0.0]);
    }

    #[test]
    fn invalid_instance_rejected() {
        let inst = MarketInstance::new([("x".to_string(), 0.0, Finite(1.0))], []);
        assert!(matches!(build_lp(&inst), Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn feasibility_examples() {
        let inst = single();
        let zero = LpSolution::zeros(1);
        let rep = check_feasibility(&inst, &zero, 1e-8).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.slack("flow[0]"), Some(1.0));

        let over = LpSolution {
            alpha: vec![0.6],
            ..LpSolution::zeros(1)
        };
        let rep = check_feasibility(&inst, &over, 1e-8).unwrap();
        assert!(!rep.feasible);
        assert!((rep.worst_violation - 0.2).abs() < 1e-12);

        assert!(check_feasibility(&inst, &LpSolution::zeros(2), 1e-8).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = patient_impatient();
        let sol = solve_instance(&inst).unwrap();
        let labels: Vec<_> = inst.types.iter().map(|t| t.label.clone()).collect();
        let text = sol.to_json(&labels).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert_eq!(LpSolution::from_json(&text).unwrap(), sol);
    }

    #[test]
    fn dump_lists_all_rows() {
        let lp = build_lp(&patient_impatient()).unwrap();
        let dump = lp.tableau_dump();
        assert!(dump.contains("flow[a]"));
        assert!(dump.contains("cap[a,b]"));
        assert!(dump.contains("fixed_zero a[b,a] a[b,b]"));
    }
}
