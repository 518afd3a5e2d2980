//! Physics check written against the case data only: it re-derives line
//! orientation and nodal balances without looking at the MILP rows.

use std::collections::BTreeMap;

use crate::grid_case::{Case, Tech};
use crate::scenario::Scenario;

use super::{InvestmentPlan, OperationSolution, PlannerOptions};

/// p.u. residual allowed on balances and voltage drops.
pub const BALANCE_TOL: f64 = 1e-6;
/// Absolute slack allowed on bounds.
pub const BOUND_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhysicsReport {
    pub max_balance_residual: f64,
    pub max_vdrop_residual: f64,
    pub max_bound_violation: f64,
    pub violations: Vec<String>,
}

impl PhysicsReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn bound(&mut self, what: impl FnOnce() -> String, excess: f64) {
        self.max_bound_violation = self.max_bound_violation.max(excess);
        if excess > BOUND_TOL || excess.is_nan() {
            self.violations.push(format!("{} exceeds its bound by {excess:.3e}", what()));
        }
    }
}

/// Checks nodal balances, corrected voltage drops, operating bounds and the
/// plan's capacity and budget limits.
pub fn check_physics(
    case: &Case,
    plan: &InvestmentPlan,
    scenarios: &[Scenario],
    op: &OperationSolution,
    opts: &PlannerOptions,
) -> PhysicsReport {
    let mut rep = PhysicsReport::default();
    let net = &case.network;
    let sb = net.s_base_kva;
    let nb = net.buses.len();
    let pos = |b| net.buses.iter().position(|&x| x == b);

    // hop distance from the substation
    let mut depth: Vec<Option<usize>> = vec![None; nb];
    if let Some(r) = pos(net.substation) {
        depth[r] = Some(0);
    }
    for _ in 0..nb {
        for l in &net.lines {
            let (a, b) = (pos(l.from), pos(l.to));
            if let (Some(a), Some(b)) = (a, b) {
                match (depth[a], depth[b]) {
                    (Some(d), None) => depth[b] = Some(d + 1),
                    (None, Some(d)) => depth[a] = Some(d + 1),
                    _ => {}
                }
            }
        }
    }
    let mut ends = Vec::with_capacity(net.lines.len());
    for (l, line) in net.lines.iter().enumerate() {
        let Some(&(parent, child)) = op.line_ends.get(l) else {
            rep.violations.push(format!("line {l} missing from the solution"));
            return rep;
        };
        let same = (parent, child) == (line.from, line.to) || (parent, child) == (line.to, line.from);
        let (pp, cp) = (pos(parent), pos(child));
        let oriented = matches!((pp.and_then(|p| depth[p]), cp.and_then(|c| depth[c])), (Some(dp), Some(dc)) if dc == dp + 1);
        if !same || !oriented {
            rep.violations.push(format!("line {}-{} is not oriented away from the substation", line.from, line.to));
            return rep;
        }
        ends.push((pp.expect("checked"), cp.expect("checked")));
    }

    // plan limits
    let mut per_bus: BTreeMap<_, f64> = BTreeMap::new();
    for (&(bus, tech), &n) in &plan.modules {
        if n > 0 && !net.is_candidate(bus, tech) {
            rep.violations.push(format!("{tech} modules at non-candidate bus {bus}"));
        }
        *per_bus.entry(bus).or_default() += n as f64 * case.catalog.get(tech).module_kw;
    }
    for (bus, kw) in per_bus {
        let limit = net.candidates.get(&bus).map_or(0.0, |c| c.dg_max_kw);
        rep.bound(|| format!("capacity at bus {bus}"), (kw - limit) / sb);
    }
    if let Some(budget) = case.economics.budget {
        // relative, since budgets are in dollars
        rep.bound(|| "investment budget".into(), (plan.invest_cost - budget) / budget.abs().max(1.0));
    }

    let (v2_lo, v2_hi) = (net.v_min * net.v_min, net.v_max * net.v_max);
    let root = pos(net.substation).expect("validated substation");
    for (s, o) in scenarios.iter().zip(&op.scenarios) {
        let tag = |what: String| format!("scenario {}: {what}", s.id);
        let mut inj_p = vec![0.0; nb];
        let mut inj_q = vec![0.0; nb];
        for (l, &(a, b)) in ends.iter().enumerate() {
            let line = &net.lines[l];
            inj_p[b] += o.p[l] - line.r_pu * o.i2[l];
            inj_q[b] += o.q[l] - line.x_pu * o.i2[l];
            inj_p[a] -= o.p[l];
            inj_q[a] -= o.q[l];

            let vdrop = o.v2[b] - (o.v2[a] - 2.0 * (line.r_pu * o.p[l] + line.x_pu * o.q[l]) + line.z2() * o.i2[l]);
            rep.max_vdrop_residual = rep.max_vdrop_residual.max(vdrop.abs());
            if !(vdrop.abs() <= BALANCE_TOL) {
                rep.violations.push(tag(format!("voltage drop on {}-{} off by {vdrop:.3e}", line.from, line.to)));
            }
            let i2_max = line.i_max_pu * line.i_max_pu;
            rep.bound(|| tag(format!("i2 on {}-{}", line.from, line.to)), (o.i2[l] - i2_max).max(-o.i2[l]));
        }
        for (k, &(bus, tech)) in op.pairs.iter().enumerate() {
            let b = pos(bus).expect("candidate bus");
            inj_p[b] += o.pg[k];
            inj_q[b] += o.qg[k];
            let gamma = match tech {
                Tech::Pv => s.gamma_pv,
                Tech::Wt => s.gamma_wt,
                Tech::Cg => s.gamma_cg,
            };
            let cap = gamma * plan.count(bus, tech) as f64 * case.catalog.get(tech).module_kw / sb;
            rep.bound(|| tag(format!("{tech} output at bus {bus}")), (o.pg[k] - cap).max(-o.pg[k]));
            let (lead, lag) = case.catalog.get(tech).reactive_band();
            rep.bound(|| tag(format!("{tech} reactive output at bus {bus}")), (lead * o.pg[k] - o.qg[k]).max(o.qg[k] - lag * o.pg[k]));
        }
        inj_p[root] += o.pss;
        inj_q[root] += o.qss;
        rep.bound(|| tag("substation import".into()), (o.pss - net.substation_p_max).max(-o.pss));
        rep.bound(|| tag("substation reactive import".into()), o.qss.abs() - net.substation_q_max);

        for (m, &bus) in net.buses.iter().enumerate() {
            let (dp, dq) = (s.gamma_d * net.demand_p(bus), s.gamma_d * net.demand_q(bus));
            let served = match (opts.shed_price, o.shed.get(m)) {
                (Some(_), Some(&f)) => {
                    rep.bound(|| tag(format!("shed fraction at bus {bus}")), (f - 1.0).max(-f));
                    1.0 - f
                }
                _ => 1.0,
            };
            for (kind, res) in [("active", inj_p[m] - served * dp), ("reactive", inj_q[m] - served * dq)] {
                rep.max_balance_residual = rep.max_balance_residual.max(res.abs());
                if !(res.abs() <= BALANCE_TOL) {
                    rep.violations.push(tag(format!("{kind} balance at bus {bus} off by {res:.3e}")));
                }
            }
            let (lo, hi) = if m == root { (1.0, 1.0) } else { (v2_lo, v2_hi) };
            rep.bound(|| tag(format!("v2 at bus {bus}")), (o.v2[m] - hi).max(lo - o.v2[m]));
        }
    }
    rep
}
