use std::collections::BTreeMap;

use crate::grid_case::{BusId, Case, Tech};
use crate::milp::{MilpProblem, MilpSolution, INTEGRALITY_TOL};
use crate::scenario::Scenario;

use super::{InvestmentPlan, ModelIndex, ModelKind, PlanError, PlannerOptions, ScenarioBlock};

/// Typed operating point of one scenario, all electrical values in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOperation {
    pub scenario_id: usize,
    /// Per line, oriented parent to child.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub i2: Vec<f64>,
    pub w: Vec<f64>,
    /// Per bus position.
    pub v2: Vec<f64>,
    /// Per candidate pair.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub pss: f64,
    pub qss: f64,
    /// Shed fraction per bus position; empty when shedding is off.
    pub shed: Vec<f64>,
    /// $/h
    pub loss_cost: f64,
    pub import_cost: f64,
    pub om_cost: f64,
    pub shed_cost: f64,
}

impl ScenarioOperation {
    /// Total operating cost, $/h.
    pub fn rate(&self) -> f64 {
        self.loss_cost + self.import_cost + self.om_cost + self.shed_cost
    }

    pub(crate) fn from_block(
        blk: &ScenarioBlock,
        values: &[f64],
        case: &Case,
        pairs: &[(BusId, Tech)],
        s: &Scenario,
        opts: &PlannerOptions,
    ) -> Self {
        let get = |ix: &[usize]| ix.iter().map(|&j| values[j]).collect::<Vec<f64>>();
        let net = &case.network;
        let sb = net.s_base_kva;
        let i2 = get(&blk.i2);
        let pg = get(&blk.pg);
        let shed = get(&blk.shed);
        let loss_cost = case.economics.loss_price * sb * net.lines.iter().zip(&i2).map(|(l, v)| l.r_pu * v).sum::<f64>();
        let import_cost = s.import_price * sb * values[blk.pss];
        let om_cost = sb * pairs.iter().zip(&pg).map(|(&(_, t), v)| case.catalog.get(t).om_cost * v).sum::<f64>();
        let shed_cost = match opts.shed_price {
            Some(price) => {
                price * sb * net.buses.iter().zip(&shed).map(|(&b, f)| s.gamma_d * net.demand_p(b) * f).sum::<f64>()
            }
            None => 0.0,
        };
        Self {
            scenario_id: s.id,
            p: get(&blk.p),
            q: get(&blk.q),
            i2,
            w: get(&blk.w),
            v2: get(&blk.v2),
            pg,
            qg: get(&blk.qg),
            pss: values[blk.pss],
            qss: values[blk.qss],
            shed,
            loss_cost,
            import_cost,
            om_cost,
            shed_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationSolution {
    /// (parent, child) bus of every line, in case order.
    pub line_ends: Vec<(BusId, BusId)>,
    pub pairs: Vec<(BusId, Tech)>,
    pub scenarios: Vec<ScenarioOperation>,
}

impl OperationSolution {
    /// Probability-free expected cost: Σ hours·rate, $.
    pub fn operating_cost(&self, scenarios: &[Scenario]) -> f64 {
        self.scenarios.iter().zip(scenarios).map(|(op, s)| s.hours * op.rate()).sum()
    }
}

/// Typed plan and operation from a solver result. Costs are recomputed from
/// the case data and compared with the solver objective.
pub fn extract_solution(
    problem: &MilpProblem,
    solution: &MilpSolution,
    index: &ModelIndex,
    case: &Case,
    scenarios: &[Scenario],
    opts: &PlannerOptions,
) -> Result<(InvestmentPlan, OperationSolution), PlanError> {
    if !solution.has_values() {
        return Err(PlanError::NoSolution(solution.status));
    }
    let values = solution.values.as_ref().expect("checked above");
    if values.len() != problem.variables.len() {
        return Err(PlanError::Verification(format!("{} values for {} columns", values.len(), problem.variables.len())));
    }
    if scenarios.len() != index.blocks.len() {
        return Err(PlanError::Verification(format!("{} scenarios for {} blocks", scenarios.len(), index.blocks.len())));
    }
    let mut counts = BTreeMap::new();
    for (&pair, &j) in index.pairs.iter().zip(&index.x) {
        let v = values[j];
        let r = v.round();
        if (v - r).abs() > INTEGRALITY_TOL || r < 0.0 {
            return Err(PlanError::Integrality { name: problem.variables[j].name.clone(), value: v, residual: (v - r).abs() });
        }
        counts.insert(pair, r as u32);
    }
    let plan = InvestmentPlan::new(case, counts)?;
    let ops: Vec<ScenarioOperation> = index
        .blocks
        .iter()
        .zip(scenarios)
        .map(|(blk, s)| ScenarioOperation::from_block(blk, values, case, &index.pairs, s, opts))
        .collect();
    let net = &case.network;
    let operation = OperationSolution {
        line_ends: index.ends.iter().map(|&(a, b)| (net.buses[a], net.buses[b])).collect(),
        pairs: index.pairs.clone(),
        scenarios: ops,
    };

    let recomputed = match index.kind {
        ModelKind::DeterministicEquivalent => plan.invest_cost + operation.operating_cost(scenarios),
        ModelKind::SecondStage => operation.scenarios[0].rate(),
    };
    let solver = solution.objective_value.unwrap_or(f64::NAN);
    if !((recomputed - solver).abs() <= 1e-6 * solver.abs().max(1.0)) {
        return Err(PlanError::CostMismatch { recomputed, solver });
    }
    Ok((plan, operation))
}
