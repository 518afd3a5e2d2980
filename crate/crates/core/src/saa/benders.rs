//! Single-cut Benders decomposition for scenario sets too large for the
//! deterministic equivalent. Every plan with x = 0 feasible is feasible for
//! all x (generation can be curtailed), so only optimality cuts are needed.

use std::collections::{BTreeMap, HashMap};

use crate::grid_case::Case;
use crate::milp::{Backend, HighsBackend, MilpProblem, Sense, SolveOptions, SolveStatus, VarType};
use crate::planner::{max_modules, InvestmentPlan, PlanError, PlannerOptions};
use crate::scenario::ScenarioSet;

use super::{evaluate_plan, SaaError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendersOptions {
    pub max_iterations: usize,
    /// Stop once (UB − LB) ≤ rel_tol·max(1, |UB|).
    pub rel_tol: f64,
}

impl Default for BendersOptions {
    fn default() -> Self {
        Self { max_iterations: 200, rel_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BendersResult {
    /// Exact cost of `plan` on the set, the best found.
    pub value: f64,
    pub plan: InvestmentPlan,
    /// Master bound at termination.
    pub lower_bound: f64,
    pub iterations: usize,
}

struct Master {
    problem: MilpProblem,
    x: Vec<usize>,
    theta: usize,
}

impl Master {
    fn new(case: &Case) -> Self {
        let pairs = case.network.candidate_pairs();
        let mut problem = MilpProblem::new("benders_master");
        let x: Vec<usize> = pairs
            .iter()
            .map(|&(b, t)| {
                let j = problem.add_var(format!("x_{}_{}", t.as_str(), b), 0.0, max_modules(case, b, t) as f64, VarType::Integer);
                problem.add_objective_term(j, case.catalog.get(t).inv_cost);
                j
            })
            .collect();
        let mut by_bus: BTreeMap<_, Vec<(usize, f64)>> = BTreeMap::new();
        for (&(b, t), &j) in pairs.iter().zip(&x) {
            by_bus.entry(b).or_default().push((j, case.catalog.get(t).module_kw));
        }
        for (b, terms) in by_bus {
            problem.add_constraint(format!("busmax_{b}"), terms, Sense::Le, case.network.candidates[&b].dg_max_kw);
        }
        if let Some(budget) = case.economics.budget {
            let terms = pairs.iter().zip(&x).map(|(&(_, t), &j)| (j, case.catalog.get(t).inv_cost)).collect();
            problem.add_constraint("budget", terms, Sense::Le, budget);
        }
        // operating costs are non-negative
        let theta = problem.add_var("theta", 0.0, f64::INFINITY, VarType::Continuous);
        problem.add_objective_term(theta, 1.0);
        Self { problem, x, theta }
    }

    /// theta ≥ q + g·(x − x̂)
    fn add_cut(&mut self, q: f64, g: &[f64], at: &[u32]) {
        let k = self.problem.constraints.len();
        let mut terms = vec![(self.theta, 1.0)];
        let mut rhs = q;
        for ((&j, &gj), &xj) in self.x.iter().zip(g).zip(at) {
            if gj != 0.0 {
                terms.push((j, -gj));
                rhs -= gj * xj as f64;
            }
        }
        self.problem.add_constraint(format!("cut{k}"), terms, Sense::Ge, rhs);
    }
}

pub fn solve_benders(
    case: &Case,
    set: &ScenarioSet,
    opts: &PlannerOptions,
    solve: &SolveOptions,
    bopts: &BendersOptions,
) -> Result<BendersResult, SaaError> {
    let mut master = Master::new(case);
    let master_opts = SolveOptions { mip_gap_target: 0.0, ..*solve };
    let pairs = case.network.candidate_pairs();
    let mut plan = InvestmentPlan::zero(case);
    let mut seen: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut best: Option<(f64, InvestmentPlan)> = None;
    let mut lower = f64::NEG_INFINITY;
    for it in 1..=bopts.max_iterations {
        let key = plan.key();
        let e = evaluate_plan(case, &plan, set, opts, solve)?;
        if !e.infeasible.is_empty() {
            return Err(SaaError::Infeasible(e.infeasible));
        }
        let value = plan.invest_cost + e.operating_cost;
        seen.insert(key.clone(), value);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, plan.clone()));
        }
        master.add_cut(e.operating_cost, &e.subgradient, &key);

        let sol = HighsBackend.solve(&master.problem, &master_opts).map_err(PlanError::from)?;
        if sol.status != SolveStatus::Optimal {
            return Err(PlanError::NoSolution(sol.status).into());
        }
        lower = sol.dual_bound.or(sol.objective_value).expect("optimal master");
        let values = sol.values.as_ref().expect("optimal master has values");
        let counts = pairs.iter().zip(&master.x).map(|(&p, &j)| (p, values[j].round().max(0.0) as u32)).collect();
        plan = InvestmentPlan::new(case, counts)?;

        let (ub, _) = best.as_ref().expect("set above");
        let gap = ub - lower;
        log::debug!("benders iteration {it}: lb {lower:.6}, ub {ub:.6}");
        if gap <= bopts.rel_tol * ub.abs().max(1.0) || seen.contains_key(&plan.key()) {
            let (value, plan) = best.expect("set above");
            return Ok(BendersResult { value, plan, lower_bound: lower, iterations: it });
        }
    }
    let ub = best.map_or(f64::INFINITY, |b| b.0);
    Err(SaaError::NotConverged { iterations: bopts.max_iterations, gap: ub - lower })
}
