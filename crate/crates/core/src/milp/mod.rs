//! Solver-agnostic MILP representation, backend contract and independent
//! solution checking.
//!
//! Problems are always minimizations. A [`Backend`] solves them either
//! in-process ([`HighsBackend`]) or through an external executable
//! ([`FileExchangeBackend`]).

mod external;
mod highs;
mod mps;

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{FileExchangeBackend, SOLVER_CMD_ENV};
pub use highs::{read_mps_with_highs, HighsBackend, MpsSummary};
pub use mps::{export_mps, MpsNames};

/// Absolute feasibility tolerance on normalized rows and bounds.
pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("solver backend unavailable: {0}")]
    Unavailable(String),
    #[error("solver backend failed: {0}")]
    Backend(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarType {
    Continuous,
    Integer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub var_type: VarType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Signed violation scaled by max(1, max |a_ij|); zero when satisfied.
    pub fn normalized_violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        let raw = match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        };
        let scale = self.terms.iter().map(|t| t.1.abs()).fold(1.0, f64::max);
        raw / scale
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

/// Minimize `objective` subject to `constraints` and variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpProblem {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl MilpProblem {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, var_type: VarType) -> usize {
        self.variables.push(Variable { name: name.into(), lower, upper, var_type });
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { name: name.into(), terms, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn add_objective_term(&mut self, var: usize, coef: f64) {
        self.objective.terms.push((var, coef));
    }

    /// Dense cost vector; repeated terms are summed.
    pub fn cost_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.variables.len()];
        for &(j, a) in &self.objective.terms {
            c[j] += a;
        }
        c
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.constant + self.objective.terms.iter().map(|&(j, a)| a * values[j]).sum::<f64>()
    }

    pub fn is_mip(&self) -> bool {
        self.variables.iter().any(|v| v.var_type == VarType::Integer)
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.terms.len()).sum()
    }

    pub fn var_index(&self) -> HashMap<&str, usize> {
        self.variables.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        let mut seen = HashMap::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            if v.name.is_empty() {
                return bad(format!("variable {i} has an empty name"));
            }
            if let Some(prev) = seen.insert(v.name.as_str(), i) {
                return bad(format!("duplicate variable name `{}` (indices {prev} and {i})", v.name));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return bad(format!("variable `{}` has invalid bounds [{}, {}]", v.name, v.lower, v.upper));
            }
            if v.lower > v.upper {
                return bad(format!("variable `{}` has lower {} > upper {}", v.name, v.lower, v.upper));
            }
        }
        let n = self.variables.len();
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return bad(format!("constraint `{}` has non-finite rhs", c.name));
            }
            for &(j, a) in &c.terms {
                if j >= n {
                    return bad(format!("constraint `{}` references variable {j} of {n}", c.name));
                }
                if !a.is_finite() {
                    return bad(format!("constraint `{}` has non-finite coefficient on `{}`", c.name, self.variables[j].name));
                }
            }
        }
        if !self.objective.constant.is_finite() {
            return bad("objective constant is not finite".into());
        }
        for &(j, a) in &self.objective.terms {
            if j >= n || !a.is_finite() {
                return bad(format!("objective term ({j}, {a}) is invalid"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub objective_value: Option<f64>,
    pub values: Option<Vec<f64>>,
    /// Column duals; only filled for continuous problems.
    pub reduced_costs: Option<Vec<f64>>,
    pub solve_wall_time: f64,
    pub mip_gap: Option<f64>,
    pub dual_bound: Option<f64>,
}

impl MilpSolution {
    pub fn without_values(status: SolveStatus, solve_wall_time: f64) -> Self {
        Self { status, objective_value: None, values: None, reduced_costs: None, solve_wall_time, mip_gap: None, dual_bound: None }
    }

    pub fn has_values(&self) -> bool {
        self.values.is_some() && matches!(self.status, SolveStatus::Optimal | SolveStatus::LimitReached)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative MIP gap at which the search stops.
    pub mip_gap_target: f64,
    /// Seconds.
    pub time_limit: f64,
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mip_gap_target: 1e-6, time_limit: 600.0, threads: 1 }
    }
}

/// Solver backend contract.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn solve(&self, problem: &MilpProblem, opts: &SolveOptions) -> Result<MilpSolution, SolverError>;

    /// Opens a session for repeated solves of one problem under small edits.
    /// The default rebuilds the problem on every solve.
    fn session<'a>(&'a self, problem: &MilpProblem, opts: &SolveOptions) -> Result<Box<dyn LpSession + 'a>, SolverError> {
        problem.validate()?;
        Ok(Box::new(RebuildSession { backend: self, problem: problem.clone(), opts: *opts }))
    }
}

/// Incremental edits followed by re-solves. Rows and columns keep the
/// indices of the problem the session was opened with.
pub trait LpSession {
    fn problem(&self) -> &MilpProblem;
    fn set_var_bounds(&mut self, var: usize, lower: f64, upper: f64);
    /// Moves the right-hand side; equality rows move both sides.
    fn set_rhs(&mut self, row: usize, rhs: f64);
    fn set_coefficient(&mut self, row: usize, var: usize, value: f64);
    fn set_objective_coefficient(&mut self, var: usize, value: f64);
    fn solve(&mut self) -> Result<MilpSolution, SolverError>;
}

pub(crate) fn edit_bounds(p: &mut MilpProblem, var: usize, lower: f64, upper: f64) {
    p.variables[var].lower = lower;
    p.variables[var].upper = upper;
}

pub(crate) fn edit_rhs(p: &mut MilpProblem, row: usize, rhs: f64) {
    p.constraints[row].rhs = rhs;
}

pub(crate) fn edit_coefficient(p: &mut MilpProblem, row: usize, var: usize, value: f64) {
    let terms = &mut p.constraints[row].terms;
    terms.retain(|t| t.0 != var);
    if value != 0.0 {
        terms.push((var, value));
    }
}

pub(crate) fn edit_objective(p: &mut MilpProblem, var: usize, value: f64) {
    p.objective.terms.retain(|t| t.0 != var);
    if value != 0.0 {
        p.objective.terms.push((var, value));
    }
}

struct RebuildSession<'a, B: Backend + ?Sized> {
    backend: &'a B,
    problem: MilpProblem,
    opts: SolveOptions,
}

impl<B: Backend + ?Sized> LpSession for RebuildSession<'_, B> {
    fn problem(&self) -> &MilpProblem {
        &self.problem
    }
    fn set_var_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        edit_bounds(&mut self.problem, var, lower, upper);
    }
    fn set_rhs(&mut self, row: usize, rhs: f64) {
        edit_rhs(&mut self.problem, row, rhs);
    }
    fn set_coefficient(&mut self, row: usize, var: usize, value: f64) {
        edit_coefficient(&mut self.problem, row, var, value);
    }
    fn set_objective_coefficient(&mut self, var: usize, value: f64) {
        edit_objective(&mut self.problem, var, value);
    }
    fn solve(&mut self) -> Result<MilpSolution, SolverError> {
        self.backend.solve(&self.problem, &self.opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    LowerBound,
    UpperBound,
    Integrality,
    Row,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Variable or constraint name.
    pub name: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub violations: Vec<Violation>,
    pub max_row_residual: f64,
    pub max_bound_residual: f64,
    pub max_integrality_residual: f64,
}

impl CheckReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        write!(f, "{} violation(s):", self.violations.len())?;
        for v in self.violations.iter().take(10) {
            write!(f, " [{:?} {} {:.3e}]", v.kind, v.name, v.residual)?;
        }
        Ok(())
    }
}

/// Lists every bound, integrality and row violation above `tol`. Integrality
/// uses `max(tol, INTEGRALITY_TOL)`. A solution without values yields a
/// single row violation named `<no values>`.
pub fn check_solution(p: &MilpProblem, s: &MilpSolution, tol: f64) -> CheckReport {
    match &s.values {
        Some(values) if values.len() == p.variables.len() => check_values(p, values, tol),
        _ => CheckReport {
            violations: vec![Violation { kind: ViolationKind::Row, name: "<no values>".into(), residual: f64::INFINITY }],
            ..Default::default()
        },
    }
}

pub fn check_values(p: &MilpProblem, values: &[f64], tol: f64) -> CheckReport {
    let mut r = CheckReport::default();
    let int_tol = tol.max(INTEGRALITY_TOL);
    for (v, &x) in p.variables.iter().zip(values) {
        let below = v.lower - x;
        let above = x - v.upper;
        if !x.is_finite() {
            r.violations.push(Violation { kind: ViolationKind::Row, name: v.name.clone(), residual: f64::INFINITY });
            continue;
        }
        r.max_bound_residual = r.max_bound_residual.max(below).max(above);
        if below > tol {
            r.violations.push(Violation { kind: ViolationKind::LowerBound, name: v.name.clone(), residual: below });
        }
        if above > tol {
            r.violations.push(Violation { kind: ViolationKind::UpperBound, name: v.name.clone(), residual: above });
        }
        if v.var_type == VarType::Integer {
            let frac = (x - x.round()).abs();
            r.max_integrality_residual = r.max_integrality_residual.max(frac);
            if frac > int_tol {
                r.violations.push(Violation { kind: ViolationKind::Integrality, name: v.name.clone(), residual: frac });
            }
        }
    }
    for c in &p.constraints {
        let res = c.normalized_violation(values);
        r.max_row_residual = r.max_row_residual.max(res);
        if res > tol || res.is_nan() {
            r.violations.push(Violation { kind: ViolationKind::Row, name: c.name.clone(), residual: res });
        }
    }
    r
}

pub(crate) fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}
