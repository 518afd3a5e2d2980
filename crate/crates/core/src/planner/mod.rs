//! Compiles the two-stage DG planning model into MILP form.
//!
//! First stage: integer module counts per candidate (bus, technology).
//! Second stage, per scenario: a linearized branch-flow OPF with squared
//! voltages and currents, McCormick envelopes for the voltage-current
//! product, and a polygon/tangent outer approximation of |S|² ≤ v²·i².

mod build;
mod extract;
mod physics;
#[cfg(test)]
mod model_tests;

use std::collections::BTreeMap;

use serde_json::json;
use thiserror::Error;

use crate::grid_case::{BusId, Case, CaseError, Tech, TechnologyCatalog};
use crate::milp::{SolveStatus, SolverError};
use crate::scenario::ScenarioError;

pub use build::{build_deterministic_equivalent, build_second_stage, ModelIndex, ModelKind, ScenarioBlock, SecondStage, StageOutcome};
pub use extract::{extract_solution, OperationSolution, ScenarioOperation};
pub use physics::{check_physics, PhysicsReport, BALANCE_TOL, BOUND_TOL};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("no usable solution (status {0:?})")]
    NoSolution(SolveStatus),
    #[error("integer variable `{name}` is {value}, {residual:.2e} away from an integer")]
    Integrality { name: String, value: f64, residual: f64 },
    #[error("recomputed objective {recomputed} differs from solver objective {solver}")]
    CostMismatch { recomputed: f64, solver: f64 },
    #[error("accepted solution failed verification: {0}")]
    Verification(String),
}

/// Resolution of the outer approximation of the apparent-power disc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelaxationConfig {
    /// Sides of the regular polygon around the (p, q) disc.
    pub polygon_sides: usize,
    /// Tangent cuts on the concave √w.
    pub sqrt_breakpoints: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self { polygon_sides: 12, sqrt_breakpoints: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    pub relaxation: RelaxationConfig,
    /// $/kWh of unserved demand; `None` keeps demand hard.
    pub shed_price: Option<f64>,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self { relaxation: RelaxationConfig::default(), shed_price: None }
    }
}

/// Most modules of `tech` that fit the candidate limit at `bus`.
pub fn max_modules(case: &Case, bus: BusId, tech: Tech) -> u32 {
    let Some(c) = case.network.candidates.get(&bus) else { return 0 };
    if !c.techs.contains(&tech) {
        return 0;
    }
    (c.dg_max_kw / case.catalog.get(tech).module_kw + 1e-9).floor() as u32
}

/// First-stage decision: module counts per candidate (bus, technology).
#[derive(Debug, Clone, PartialEq)]
pub struct InvestmentPlan {
    /// Every candidate pair of the case, including zeros.
    pub modules: BTreeMap<(BusId, Tech), u32>,
    /// $ over the horizon.
    pub invest_cost: f64,
}

impl InvestmentPlan {
    pub fn zero(case: &Case) -> Self {
        let modules = case.network.candidate_pairs().into_iter().map(|k| (k, 0)).collect();
        Self { modules, invest_cost: 0.0 }
    }

    /// Validates candidacy and per-bus capacity; missing pairs count as 0.
    pub fn new(case: &Case, counts: BTreeMap<(BusId, Tech), u32>) -> Result<Self, PlanError> {
        let mut plan = Self::zero(case);
        for ((bus, tech), n) in counts {
            match plan.modules.get_mut(&(bus, tech)) {
                Some(slot) => *slot = n,
                None if n == 0 => {}
                None => return Err(PlanError::InvalidPlan(format!("bus {bus} is not a {tech} candidate"))),
            }
        }
        let mut per_bus: BTreeMap<BusId, f64> = BTreeMap::new();
        for (&(bus, tech), &n) in &plan.modules {
            *per_bus.entry(bus).or_default() += n as f64 * case.catalog.get(tech).module_kw;
        }
        for (bus, kw) in per_bus {
            let limit = case.network.candidates[&bus].dg_max_kw;
            if kw > limit * (1.0 + 1e-12) {
                return Err(PlanError::InvalidPlan(format!("bus {bus} hosts {kw} kW, limit {limit} kW")));
            }
        }
        plan.invest_cost = plan.modules.iter().map(|(&(_, t), &n)| n as f64 * case.catalog.get(t).inv_cost).sum();
        Ok(plan)
    }

    pub fn count(&self, bus: BusId, tech: Tech) -> u32 {
        self.modules.get(&(bus, tech)).copied().unwrap_or(0)
    }

    /// Module counts in candidate-pair order.
    pub fn key(&self) -> Vec<u32> {
        self.modules.values().copied().collect()
    }

    pub fn within_budget(&self, case: &Case) -> bool {
        case.economics.budget.is_none_or(|b| self.invest_cost <= b * (1.0 + 1e-12))
    }

    /// Installed kW per technology, in `Tech::ALL` order.
    pub fn installed_kw(&self, cat: &TechnologyCatalog) -> [f64; 3] {
        let mut kw = [0.0; 3];
        for (&(_, tech), &n) in &self.modules {
            let k = Tech::ALL.iter().position(|&t| t == tech).expect("known tech");
            kw[k] += n as f64 * cat.get(tech).module_kw;
        }
        kw
    }

    /// Installed-capacity shares per technology; `None` for an empty plan.
    pub fn capacity_shares(&self, cat: &TechnologyCatalog) -> Option<[f64; 3]> {
        let kw = self.installed_kw(cat);
        let total: f64 = kw.iter().sum();
        (total > 0.0).then(|| kw.map(|v| v / total))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let modules: Vec<_> = self
            .modules
            .iter()
            .map(|(&(bus, tech), &n)| json!({ "bus": bus.0, "tech": tech.as_str(), "modules": n }))
            .collect();
        json!({ "invest_cost": self.invest_cost, "modules": modules })
    }

    pub fn from_json(case: &Case, v: &serde_json::Value) -> Result<Self, PlanError> {
        let bad = |m: &str| PlanError::InvalidPlan(format!("plan JSON: {m}"));
        let list = v.get("modules").and_then(|m| m.as_array()).ok_or_else(|| bad("missing `modules` array"))?;
        let mut counts = BTreeMap::new();
        for item in list {
            let bus = item.get("bus").and_then(|b| b.as_u64()).ok_or_else(|| bad("entry without integer `bus`"))?;
            let tech: Tech = item
                .get("tech")
                .and_then(|t| t.as_str())
                .ok_or_else(|| bad("entry without `tech`"))?
                .parse()
                .map_err(|_| bad("unknown technology"))?;
            let n = item.get("modules").and_then(|m| m.as_u64()).ok_or_else(|| bad("entry without integer `modules`"))?;
            counts.insert((BusId(bus as u32), tech), n as u32);
        }
        Self::new(case, counts)
    }
}

/// Every plan allowed by candidacy, per-bus capacity and budget, in
/// lexicographic order of candidate-pair counts.
pub fn enumerate_plans(case: &Case) -> Vec<InvestmentPlan> {
    let pairs = case.network.candidate_pairs();
    let limits: Vec<u32> = pairs.iter().map(|&(b, t)| max_modules(case, b, t)).collect();
    let mut out = Vec::new();
    let mut counts = vec![0u32; pairs.len()];
    loop {
        let map = pairs.iter().copied().zip(counts.iter().copied()).collect();
        if let Ok(plan) = InvestmentPlan::new(case, map) {
            if plan.within_budget(case) {
                out.push(plan);
            }
        }
        let mut k = pairs.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if counts[k] < limits[k] {
                counts[k] += 1;
                break;
            }
            counts[k] = 0;
        }
    }
}
