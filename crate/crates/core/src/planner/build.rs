use std::f64::consts::PI;

use crate::grid_case::{BusId, Case, Tech};
use crate::milp::{check_solution, Backend, LpSession, MilpProblem, MilpSolution, Sense, SolveOptions, SolveStatus, VarType, FEASIBILITY_TOL};
use crate::scenario::{Scenario, ScenarioSet};

use super::{max_modules, InvestmentPlan, PlanError, PlannerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Integer first stage, objective in $ over the horizon.
    DeterministicEquivalent,
    /// First stage fixed by bounds, objective in $/h.
    SecondStage,
}

/// Column and row indices of one scenario's operating problem.
#[derive(Debug, Clone)]
pub struct ScenarioBlock {
    /// Position of the scenario in the set it was built from.
    pub position: usize,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub i2: Vec<usize>,
    pub w: Vec<usize>,
    pub mag: Vec<usize>,
    /// Per bus position.
    pub v2: Vec<usize>,
    /// Per candidate pair.
    pub pg: Vec<usize>,
    pub qg: Vec<usize>,
    pub pss: usize,
    pub qss: usize,
    /// Per bus position; empty unless shedding is enabled.
    pub shed: Vec<usize>,
    pub bal_p: Vec<usize>,
    pub bal_q: Vec<usize>,
    pub cap: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub kind: ModelKind,
    pub pairs: Vec<(BusId, Tech)>,
    /// First-stage columns, per candidate pair.
    pub x: Vec<usize>,
    /// Line ends as (parent, child) bus positions, per line of the case.
    pub ends: Vec<(usize, usize)>,
    pub blocks: Vec<ScenarioBlock>,
    pub busmax_rows: Vec<usize>,
    pub budget_row: Option<usize>,
}

/// Scenario-dependent data, shared by model building and session updates so
/// both produce identical rows.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScenarioCoefs {
    pub demand_p: Vec<f64>,
    pub demand_q: Vec<f64>,
    /// Coefficient of x in each dispatch row (−γ·module_kw/S_b).
    pub cap: Vec<f64>,
    /// $/h per p.u. of import.
    pub import_obj: f64,
    /// $/h per unit shed fraction, per bus.
    pub shed_obj: Vec<f64>,
}

pub(crate) fn scenario_coefs(case: &Case, pairs: &[(BusId, Tech)], s: &Scenario, opts: &PlannerOptions) -> ScenarioCoefs {
    let net = &case.network;
    let sb = net.s_base_kva;
    let demand_p: Vec<f64> = net.buses.iter().map(|&b| s.gamma_d * net.demand_p(b)).collect();
    let demand_q = net.buses.iter().map(|&b| s.gamma_d * net.demand_q(b)).collect();
    let cap = pairs
        .iter()
        .map(|&(_, t)| {
            let gamma = match t {
                Tech::Pv => s.gamma_pv,
                Tech::Wt => s.gamma_wt,
                Tech::Cg => s.gamma_cg,
            };
            -gamma * case.catalog.get(t).module_kw / sb
        })
        .collect();
    let shed_obj = match opts.shed_price {
        Some(price) => demand_p.iter().map(|d| price * sb * d).collect(),
        None => Vec::new(),
    };
    ScenarioCoefs { demand_p, demand_q, cap, import_obj: s.import_price * sb, shed_obj }
}

/// Breakpoints ŵ_k = w_max·(k/B)², so tangents are evenly spaced in |S|.
pub(crate) fn sqrt_breakpoints(w_max: f64, b: usize) -> Vec<f64> {
    (1..=b).map(|k| w_max * (k as f64 / b as f64).powi(2)).collect()
}

pub(crate) fn polygon_angles(k: usize) -> Vec<f64> {
    (0..k).map(|j| 2.0 * PI * j as f64 / k as f64).collect()
}

struct Builder<'c> {
    case: &'c Case,
    opts: &'c PlannerOptions,
    pairs: Vec<(BusId, Tech)>,
    pair_bus: Vec<usize>,
    ends: Vec<(usize, usize)>,
}

impl<'c> Builder<'c> {
    fn new(case: &'c Case, opts: &'c PlannerOptions) -> Result<Self, PlanError> {
        case.validate()?;
        let r = &opts.relaxation;
        if r.polygon_sides < 3 || r.sqrt_breakpoints < 1 {
            return Err(PlanError::InvalidPlan(format!("relaxation needs >= 3 polygon sides and >= 1 breakpoint, got {r:?}")));
        }
        let net = &case.network;
        let pairs = net.candidate_pairs();
        if pairs.is_empty() {
            log::warn!("case `{}` has no candidate buses; the model is pure import", net.name);
        }
        let pair_bus = pairs.iter().map(|&(b, _)| net.bus_position(b).expect("validated candidate")).collect();
        let ends = net.radial().ends;
        Ok(Self { case, opts, pairs, pair_bus, ends })
    }

    fn index(&self, kind: ModelKind) -> ModelIndex {
        ModelIndex {
            kind,
            pairs: self.pairs.clone(),
            x: Vec::new(),
            ends: self.ends.clone(),
            blocks: Vec::new(),
            busmax_rows: Vec::new(),
            budget_row: None,
        }
    }

    /// Integer module counts with per-bus capacity and budget rows.
    fn first_stage(&self, prob: &mut MilpProblem, idx: &mut ModelIndex) {
        let net = &self.case.network;
        for &(bus, tech) in &self.pairs {
            let ub = max_modules(self.case, bus, tech) as f64;
            let j = prob.add_var(format!("x_{}_{bus}", tech.as_str()), 0.0, ub, VarType::Integer);
            prob.add_objective_term(j, self.case.catalog.get(tech).inv_cost);
            idx.x.push(j);
        }
        for (&bus, cand) in &net.candidates {
            let terms: Vec<(usize, f64)> = self
                .pairs
                .iter()
                .zip(&idx.x)
                .filter(|((b, _), _)| *b == bus)
                .map(|(&(_, t), &j)| (j, self.case.catalog.get(t).module_kw))
                .collect();
            if !terms.is_empty() {
                idx.busmax_rows.push(prob.add_constraint(format!("busmax_{bus}"), terms, Sense::Le, cand.dg_max_kw));
            }
        }
        if let Some(budget) = self.case.economics.budget {
            let terms = self.pairs.iter().zip(&idx.x).map(|(&(_, t), &j)| (j, self.case.catalog.get(t).inv_cost)).collect();
            idx.budget_row = Some(prob.add_constraint("budget", terms, Sense::Le, budget));
        }
    }

    /// First-stage columns pinned to `plan`, without cost.
    fn fixed_first_stage(&self, prob: &mut MilpProblem, idx: &mut ModelIndex, plan: &InvestmentPlan) {
        for &(bus, tech) in &self.pairs {
            let n = plan.count(bus, tech) as f64;
            idx.x.push(prob.add_var(format!("x_{}_{bus}", tech.as_str()), n, n, VarType::Continuous));
        }
    }

    fn scenario_block(&self, prob: &mut MilpProblem, idx: &ModelIndex, s: &Scenario, position: usize, weight: f64) -> ScenarioBlock {
        let case = self.case;
        let net = &case.network;
        let sb = net.s_base_kva;
        let econ = &case.economics;
        let c = scenario_coefs(case, &self.pairs, s, self.opts);
        let tag = format!("s{position}");
        let (v2_lo, v2_hi) = (net.v_min * net.v_min, net.v_max * net.v_max);
        let root = net.bus_position(net.substation).expect("validated substation");
        let bus_id = |pos: usize| net.buses[pos];

        let mut blk = ScenarioBlock {
            position,
            p: vec![],
            q: vec![],
            i2: vec![],
            w: vec![],
            mag: vec![],
            v2: vec![],
            pg: vec![],
            qg: vec![],
            pss: 0,
            qss: 0,
            shed: vec![],
            bal_p: vec![],
            bal_q: vec![],
            cap: vec![],
        };

        for (pos, &bus) in net.buses.iter().enumerate() {
            let (lo, hi) = if pos == root { (1.0, 1.0) } else { (v2_lo, v2_hi) };
            blk.v2.push(prob.add_var(format!("v2_{bus}_{tag}"), lo, hi, VarType::Continuous));
        }
        for (l, line) in net.lines.iter().enumerate() {
            let (a, b) = self.ends[l];
            let name = format!("{}_{}_{tag}", bus_id(a), bus_id(b));
            let i2_max = line.i_max_pu * line.i_max_pu;
            let a_hi = if a == root { 1.0 } else { v2_hi };
            blk.p.push(prob.add_var(format!("p_{name}"), f64::NEG_INFINITY, f64::INFINITY, VarType::Continuous));
            blk.q.push(prob.add_var(format!("q_{name}"), f64::NEG_INFINITY, f64::INFINITY, VarType::Continuous));
            let i2 = prob.add_var(format!("i2_{name}"), 0.0, i2_max, VarType::Continuous);
            blk.i2.push(i2);
            blk.w.push(prob.add_var(format!("w_{name}"), 0.0, a_hi * i2_max, VarType::Continuous));
            blk.mag.push(prob.add_var(format!("mag_{name}"), 0.0, f64::INFINITY, VarType::Continuous));
            prob.add_objective_term(i2, weight * econ.loss_price * sb * line.r_pu);
        }
        for &(bus, tech) in &self.pairs {
            let pg = prob.add_var(format!("pg_{}_{bus}_{tag}", tech.as_str()), 0.0, f64::INFINITY, VarType::Continuous);
            let qg = prob.add_var(format!("qg_{}_{bus}_{tag}", tech.as_str()), f64::NEG_INFINITY, f64::INFINITY, VarType::Continuous);
            prob.add_objective_term(pg, weight * sb * case.catalog.get(tech).om_cost);
            blk.pg.push(pg);
            blk.qg.push(qg);
        }
        blk.pss = prob.add_var(format!("pss_{tag}"), 0.0, net.substation_p_max, VarType::Continuous);
        blk.qss = prob.add_var(format!("qss_{tag}"), -net.substation_q_max, net.substation_q_max, VarType::Continuous);
        prob.add_objective_term(blk.pss, weight * c.import_obj);
        if self.opts.shed_price.is_some() {
            for (pos, &bus) in net.buses.iter().enumerate() {
                let f = prob.add_var(format!("shed_{bus}_{tag}"), 0.0, 1.0, VarType::Continuous);
                prob.add_objective_term(f, weight * c.shed_obj[pos]);
                blk.shed.push(f);
            }
        }

        // nodal balances
        for (pos, &bus) in net.buses.iter().enumerate() {
            let mut tp = Vec::new();
            let mut tq = Vec::new();
            for (l, line) in net.lines.iter().enumerate() {
                let (a, b) = self.ends[l];
                if b == pos {
                    tp.push((blk.p[l], 1.0));
                    tp.push((blk.i2[l], -line.r_pu));
                    tq.push((blk.q[l], 1.0));
                    tq.push((blk.i2[l], -line.x_pu));
                } else if a == pos {
                    tp.push((blk.p[l], -1.0));
                    tq.push((blk.q[l], -1.0));
                }
            }
            for (k, &pb) in self.pair_bus.iter().enumerate() {
                if pb == pos {
                    tp.push((blk.pg[k], 1.0));
                    tq.push((blk.qg[k], 1.0));
                }
            }
            if pos == root {
                tp.push((blk.pss, 1.0));
                tq.push((blk.qss, 1.0));
            }
            if !blk.shed.is_empty() {
                tp.push((blk.shed[pos], c.demand_p[pos]));
                tq.push((blk.shed[pos], c.demand_q[pos]));
            }
            blk.bal_p.push(prob.add_constraint(format!("bal_p_{bus}_{tag}"), tp, Sense::Eq, c.demand_p[pos]));
            blk.bal_q.push(prob.add_constraint(format!("bal_q_{bus}_{tag}"), tq, Sense::Eq, c.demand_q[pos]));
        }

        let angles = polygon_angles(self.opts.relaxation.polygon_sides);
        for (l, line) in net.lines.iter().enumerate() {
            let (a, b) = self.ends[l];
            let name = format!("{}_{}_{tag}", bus_id(a), bus_id(b));
            let (p, q, i2, w, mag) = (blk.p[l], blk.q[l], blk.i2[l], blk.w[l], blk.mag[l]);
            let (va, vb) = (blk.v2[a], blk.v2[b]);
            prob.add_constraint(
                format!("vdrop_{name}"),
                vec![(vb, 1.0), (va, -1.0), (p, 2.0 * line.r_pu), (q, 2.0 * line.x_pu), (i2, -line.z2())],
                Sense::Eq,
                0.0,
            );

            // w ≈ v²_parent · i² over the box [aL, aU] × [0, bU]
            let (a_lo, a_hi) = if a == root { (1.0, 1.0) } else { (v2_lo, v2_hi) };
            let (b_lo, b_hi) = (0.0, line.i_max_pu * line.i_max_pu);
            let mc = [
                (a_lo, b_lo, Sense::Ge, -a_lo * b_lo),
                (a_hi, b_hi, Sense::Ge, -a_hi * b_hi),
                (a_hi, b_lo, Sense::Le, -a_hi * b_lo),
                (a_lo, b_hi, Sense::Le, -a_lo * b_hi),
            ];
            for (k, (ca, cb, sense, rhs)) in mc.into_iter().enumerate() {
                // w − ca·b − cb·a (sense) rhs
                prob.add_constraint(format!("mc{}_{name}", k + 1), vec![(w, 1.0), (i2, -ca), (va, -cb)], sense, rhs);
            }

            for (j, &th) in angles.iter().enumerate() {
                prob.add_constraint(format!("poly{j}_{name}"), vec![(p, th.cos()), (q, th.sin()), (mag, -1.0)], Sense::Le, 0.0);
            }
            for (k, wk) in sqrt_breakpoints(a_hi * b_hi, self.opts.relaxation.sqrt_breakpoints).into_iter().enumerate() {
                let root_wk = wk.sqrt();
                prob.add_constraint(format!("sqrt{}_{name}", k + 1), vec![(mag, 1.0), (w, -0.5 / root_wk)], Sense::Le, 0.5 * root_wk);
            }
        }

        for (k, &(bus, tech)) in self.pairs.iter().enumerate() {
            let t = tech.as_str();
            let (pg, qg) = (blk.pg[k], blk.qg[k]);
            blk.cap.push(prob.add_constraint(format!("cap_{t}_{bus}_{tag}"), vec![(pg, 1.0), (idx.x[k], c.cap[k])], Sense::Le, 0.0));
            let (lead, lag) = self.case.catalog.get(tech).reactive_band();
            prob.add_constraint(format!("pfl_{t}_{bus}_{tag}"), vec![(qg, 1.0), (pg, -lead)], Sense::Ge, 0.0);
            prob.add_constraint(format!("pfu_{t}_{bus}_{tag}"), vec![(qg, 1.0), (pg, -lag)], Sense::Le, 0.0);
        }
        blk
    }
}

/// Full two-stage model over every scenario of `scen`.
pub fn build_deterministic_equivalent(
    case: &Case,
    scen: &ScenarioSet,
    opts: &PlannerOptions,
) -> Result<(MilpProblem, ModelIndex), PlanError> {
    if scen.is_empty() {
        return Err(PlanError::InvalidPlan("empty scenario set".into()));
    }
    let b = Builder::new(case, opts)?;
    let mut prob = MilpProblem::new(format!("{}_de_{}", case.network.name, scen.len()));
    let mut idx = b.index(ModelKind::DeterministicEquivalent);
    b.first_stage(&mut prob, &mut idx);
    for (pos, s) in scen.scenarios.iter().enumerate() {
        let blk = b.scenario_block(&mut prob, &idx, s, pos, s.hours);
        idx.blocks.push(blk);
    }
    Ok((prob, idx))
}

/// Operating problem of one scenario under a fixed plan, objective in $/h.
pub fn build_second_stage(
    case: &Case,
    scen: &Scenario,
    plan: &InvestmentPlan,
    opts: &PlannerOptions,
) -> Result<(MilpProblem, ModelIndex), PlanError> {
    let b = Builder::new(case, opts)?;
    InvestmentPlan::new(case, plan.modules.clone())?;
    let mut prob = MilpProblem::new(format!("{}_op", case.network.name));
    let mut idx = b.index(ModelKind::SecondStage);
    b.fixed_first_stage(&mut prob, &mut idx, plan);
    let blk = b.scenario_block(&mut prob, &idx, scen, 0, 1.0);
    idx.blocks.push(blk);
    Ok((prob, idx))
}

/// Result of one second-stage solve.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub status: SolveStatus,
    /// Operating cost, $/h; infinite when infeasible.
    pub rate: f64,
    /// d(rate)/d(modules) per candidate pair.
    pub subgradient: Vec<f64>,
    pub solution: MilpSolution,
}

/// Re-solves the second stage across scenarios and plans on one warm
/// solver session.
pub struct SecondStage<'a> {
    case: &'a Case,
    opts: PlannerOptions,
    session: Box<dyn LpSession + 'a>,
    index: ModelIndex,
    coefs: ScenarioCoefs,
    plan_key: Vec<u32>,
}

impl<'a> SecondStage<'a> {
    pub fn open(
        backend: &'a dyn Backend,
        case: &'a Case,
        first: &Scenario,
        plan: &InvestmentPlan,
        opts: &PlannerOptions,
        solve: &SolveOptions,
    ) -> Result<Self, PlanError> {
        let (prob, index) = build_second_stage(case, first, plan, opts)?;
        let coefs = scenario_coefs(case, &index.pairs, first, opts);
        let session = backend.session(&prob, solve)?;
        Ok(Self { case, opts: *opts, session, index, coefs, plan_key: plan.key() })
    }

    pub fn index(&self) -> &ModelIndex {
        &self.index
    }

    pub fn problem(&self) -> &MilpProblem {
        self.session.problem()
    }

    pub fn set_plan(&mut self, plan: &InvestmentPlan) {
        let key = plan.key();
        for (k, (&new, &old)) in key.iter().zip(&self.plan_key).enumerate() {
            if new != old {
                self.session.set_var_bounds(self.index.x[k], new as f64, new as f64);
            }
        }
        self.plan_key = key;
    }

    fn load_scenario(&mut self, s: &Scenario) {
        let c = scenario_coefs(self.case, &self.index.pairs, s, &self.opts);
        let blk = &self.index.blocks[0];
        for pos in 0..c.demand_p.len() {
            if c.demand_p[pos] != self.coefs.demand_p[pos] {
                self.session.set_rhs(blk.bal_p[pos], c.demand_p[pos]);
            }
            if c.demand_q[pos] != self.coefs.demand_q[pos] {
                self.session.set_rhs(blk.bal_q[pos], c.demand_q[pos]);
            }
            if !blk.shed.is_empty() {
                if c.demand_p[pos] != self.coefs.demand_p[pos] {
                    self.session.set_coefficient(blk.bal_p[pos], blk.shed[pos], c.demand_p[pos]);
                    self.session.set_objective_coefficient(blk.shed[pos], c.shed_obj[pos]);
                }
                if c.demand_q[pos] != self.coefs.demand_q[pos] {
                    self.session.set_coefficient(blk.bal_q[pos], blk.shed[pos], c.demand_q[pos]);
                }
            }
        }
        for k in 0..c.cap.len() {
            if c.cap[k] != self.coefs.cap[k] {
                self.session.set_coefficient(blk.cap[k], self.index.x[k], c.cap[k]);
            }
        }
        if c.import_obj != self.coefs.import_obj {
            self.session.set_objective_coefficient(blk.pss, c.import_obj);
        }
        self.coefs = c;
    }

    /// Solves scenario `s` under the current plan and verifies the result
    /// against the problem rows.
    pub fn solve(&mut self, s: &Scenario) -> Result<StageOutcome, PlanError> {
        self.load_scenario(s);
        let sol = self.session.solve()?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Ok(StageOutcome { status: sol.status, rate: f64::INFINITY, subgradient: vec![], solution: sol })
            }
            other => return Err(PlanError::NoSolution(other)),
        }
        let report = check_solution(self.session.problem(), &sol, FEASIBILITY_TOL);
        if !report.is_feasible() {
            return Err(PlanError::Verification(format!("scenario {}: {report}", s.id)));
        }
        let rate = sol.objective_value.expect("optimal has objective");
        let subgradient = match &sol.reduced_costs {
            Some(rc) => self.index.x.iter().map(|&j| rc[j]).collect(),
            None => vec![f64::NAN; self.index.x.len()],
        };
        Ok(StageOutcome { status: sol.status, rate, subgradient, solution: sol })
    }
}
