use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::grid_case::{bundled_case, BusId, Case, Line, Load, Tech};
use crate::milp::{check_solution, Backend, HighsBackend, MilpProblem, SolveOptions, SolveStatus, FEASIBILITY_TOL};
use crate::scenario::{Scenario, ScenarioSet};

fn scenario(id: usize, gamma_pv: f64, gamma_wt: f64, gamma_d: f64, hours: f64, horizon: f64) -> Scenario {
    Scenario { id, gamma_pv, gamma_wt, gamma_cg: 1.0, gamma_d, prob: hours / horizon, hours, import_price: 0.12 }
}

fn three_scenarios(case: &Case) -> ScenarioSet {
    let h = case.economics.horizon_hours;
    ScenarioSet {
        scenarios: vec![
            scenario(0, 0.8, 0.2, 0.9, 0.3 * h, h),
            scenario(1, 0.0, 0.6, 0.6, 0.5 * h, h),
            scenario(2, 0.3, 0.9, 1.0, 0.2 * h, h),
        ],
        source_hours: 3,
    }
}

fn solve_de(case: &Case, set: &ScenarioSet, opts: &PlannerOptions) -> (MilpProblem, ModelIndex, crate::milp::MilpSolution) {
    let (p, idx) = build_deterministic_equivalent(case, set, opts).unwrap();
    let s = HighsBackend.solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!(check_solution(&p, &s, FEASIBILITY_TOL).is_feasible(), "{}", check_solution(&p, &s, FEASIBILITY_TOL));
    (p, idx, s)
}

fn two_bus(r: f64, x: f64, i_max: f64, p_kw: f64, q_kvar: f64) -> Case {
    let mut case = bundled_case("case4").unwrap();
    let net = &mut case.network;
    net.buses = vec![BusId(1), BusId(2)];
    net.lines = vec![Line { from: BusId(1), to: BusId(2), r_pu: r, x_pu: x, i_max_pu: i_max }];
    net.loads = BTreeMap::from([(BusId(2), Load { p_kw, q_kvar })]);
    net.candidates.clear();
    case.validate().unwrap();
    case
}

#[test]
fn two_bus_matches_closed_form_branch_flow() {
    let (r, x) = (0.02, 0.04);
    let case = two_bus(r, x, 1.0, 600.0, 300.0);
    let (pd, qd) = (0.6, 0.3);
    // |Z|²·l² + (2R·Pd + 2X·Qd − 1)·l + Pd² + Qd² = 0, smaller root
    let z2 = r * r + x * x;
    let b = 2.0 * r * pd + 2.0 * x * qd - 1.0;
    let c = pd * pd + qd * qd;
    let l = (-b - (b * b - 4.0 * z2 * c).sqrt()) / (2.0 * z2);
    let (p, q) = (pd + r * l, qd + x * l);
    let v2 = 1.0 - 2.0 * (r * p + x * q) + z2 * l;

    let h = case.economics.horizon_hours;
    let set = ScenarioSet { scenarios: vec![scenario(0, 0.0, 0.0, 1.0, h, h)], source_hours: 1 };
    let opts = PlannerOptions { relaxation: RelaxationConfig { polygon_sides: 2048, sqrt_breakpoints: 512 }, shed_price: None };
    let (prob, idx, sol) = solve_de(&case, &set, &opts);
    let (_, op) = extract_solution(&prob, &sol, &idx, &case, &set.scenarios, &opts).unwrap();
    let o = &op.scenarios[0];
    assert!((o.i2[0] - l).abs() < 1e-5, "i2 {} vs {l}", o.i2[0]);
    assert!((o.p[0] - p).abs() < 1e-5, "p {} vs {p}", o.p[0]);
    assert!((o.q[0] - q).abs() < 1e-5, "q {} vs {q}", o.q[0]);
    assert!((o.v2[1] - v2).abs() < 1e-5, "v2 {} vs {v2}", o.v2[1]);
    // imports exactly demand plus losses
    assert!((o.pss - (pd + r * o.i2[0])).abs() < 1e-9);
}

#[test]
fn coarse_relaxation_underestimates_losses() {
    let case = two_bus(0.02, 0.04, 1.0, 600.0, 300.0);
    let h = case.economics.horizon_hours;
    let set = ScenarioSet { scenarios: vec![scenario(0, 0.0, 0.0, 1.0, h, h)], source_hours: 1 };
    let coarse = PlannerOptions::default();
    let fine = PlannerOptions { relaxation: RelaxationConfig { polygon_sides: 2048, sqrt_breakpoints: 512 }, shed_price: None };
    let a = solve_de(&case, &set, &coarse).2.objective_value.unwrap();
    let b = solve_de(&case, &set, &fine).2.objective_value.unwrap();
    assert!(a <= b + 1e-9 * b);
}

#[test]
fn null_system_costs_nothing() {
    let case = bundled_case("case4").unwrap();
    let h = case.economics.horizon_hours;
    let set = ScenarioSet { scenarios: vec![scenario(0, 0.5, 0.5, 0.0, h, h)], source_hours: 1 };
    let opts = PlannerOptions::default();
    let (prob, idx, sol) = solve_de(&case, &set, &opts);
    assert!(sol.objective_value.unwrap().abs() < 1e-6);
    let (plan, op) = extract_solution(&prob, &sol, &idx, &case, &set.scenarios, &opts).unwrap();
    assert!(plan.key().iter().all(|&n| n == 0));
    assert_eq!(plan.invest_cost, 0.0);
    let o = &op.scenarios[0];
    assert!(o.p.iter().chain(&o.q).chain(&o.i2).all(|v| v.abs() < 1e-7));
    assert!(o.rate().abs() < 1e-6);
}

#[test]
fn zero_budget_equals_no_candidates() {
    let mut case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let opts = PlannerOptions::default();
    case.economics.budget = Some(0.0);
    let with_budget = solve_de(&case, &set, &opts).2.objective_value.unwrap();
    case.economics.budget = None;
    case.network.candidates.clear();
    let without = solve_de(&case, &set, &opts).2.objective_value.unwrap();
    assert!((with_budget - without).abs() <= 1e-7 * without);
}

#[test]
fn de_solution_passes_physics_and_cost_checks() {
    let case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let opts = PlannerOptions::default();
    let (prob, idx, sol) = solve_de(&case, &set, &opts);
    let (plan, op) = extract_solution(&prob, &sol, &idx, &case, &set.scenarios, &opts).unwrap();
    let rep = check_physics(&case, &plan, &set.scenarios, &op, &opts);
    assert!(rep.is_ok(), "{:?}", rep.violations);
    assert!(rep.max_balance_residual <= BALANCE_TOL);

    let mut bad = sol.clone();
    let j = idx.blocks[1].pss;
    bad.values.as_mut().unwrap()[j] += 0.01;
    assert!(matches!(
        extract_solution(&prob, &bad, &idx, &case, &set.scenarios, &opts),
        Err(PlanError::CostMismatch { .. })
    ));
    let mut frac = sol.clone();
    frac.values.as_mut().unwrap()[idx.x[0]] += 0.4;
    assert!(matches!(extract_solution(&prob, &frac, &idx, &case, &set.scenarios, &opts), Err(PlanError::Integrality { .. })));
}

#[test]
fn physics_checker_flags_broken_balance() {
    let case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let opts = PlannerOptions::default();
    let (prob, idx, sol) = solve_de(&case, &set, &opts);
    let (plan, mut op) = extract_solution(&prob, &sol, &idx, &case, &set.scenarios, &opts).unwrap();
    op.scenarios[0].pss += 1e-4;
    let rep = check_physics(&case, &plan, &set.scenarios, &op, &opts);
    assert!(rep.violations.iter().any(|v| v.contains("active balance")), "{:?}", rep.violations);
    op.scenarios[0].pss -= 1e-4;
    op.line_ends.swap(0, 1);
    assert!(!check_physics(&case, &plan, &set.scenarios, &op, &opts).is_ok());
}

fn stage_rate(case: &Case, s: &Scenario, plan: &InvestmentPlan) -> f64 {
    let opts = PlannerOptions::default();
    let (p, idx) = build_second_stage(case, s, plan, &opts).unwrap();
    let sol = HighsBackend.solve(&p, &SolveOptions::default()).unwrap();
    let (_, op) = extract_solution(&p, &sol, &idx, case, std::slice::from_ref(s), &opts).unwrap();
    assert!(check_physics(case, plan, std::slice::from_ref(s), &op, &opts).is_ok());
    sol.objective_value.unwrap()
}

#[test]
fn second_stage_reductions() {
    let case = bundled_case("case4").unwrap();
    let h = case.economics.horizon_hours;
    let s = scenario(0, 0.0, 0.4, 0.8, h, h);
    let zero = InvestmentPlan::zero(&case);
    let base = stage_rate(&case, &s, &zero);

    let mut no_dg = case.clone();
    no_dg.network.candidates.clear();
    let pure = stage_rate(&no_dg, &s, &InvestmentPlan::zero(&no_dg));
    assert!((base - pure).abs() < 1e-9 * pure);

    // no sun: a PV-only plan cannot help
    let pv = InvestmentPlan::new(&case, BTreeMap::from([((BusId(3), Tech::Pv), 2)])).unwrap();
    assert!((stage_rate(&case, &s, &pv) - base).abs() < 1e-9 * base);

    assert!(case.catalog.cg.om_cost < case.economics.import_price);
    let cg = InvestmentPlan::new(&case, BTreeMap::from([((BusId(3), Tech::Cg), 1)])).unwrap();
    assert!(stage_rate(&case, &s, &cg) <= base);
}

#[test]
fn warm_session_matches_fresh_builds_and_subgradients_match_differences() {
    let case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let opts = PlannerOptions::default();
    let plans = [
        InvestmentPlan::zero(&case),
        InvestmentPlan::new(&case, BTreeMap::from([((BusId(3), Tech::Pv), 1), ((BusId(4), Tech::Wt), 2)])).unwrap(),
        InvestmentPlan::new(&case, BTreeMap::from([((BusId(4), Tech::Cg), 1), ((BusId(3), Tech::Wt), 1)])).unwrap(),
    ];
    let backend = HighsBackend;
    let mut stage = SecondStage::open(&backend, &case, &set.scenarios[0], &plans[0], &opts, &SolveOptions::default()).unwrap();
    for plan in &plans {
        stage.set_plan(plan);
        for s in &set.scenarios {
            let out = stage.solve(s).unwrap();
            let fresh = stage_rate(&case, s, plan);
            assert!((out.rate - fresh).abs() <= 1e-7 * fresh.max(1.0), "{} vs {fresh}", out.rate);
            // convexity: one-sided differences bracket the subgradient
            for (k, &pair) in stage.index().pairs.clone().iter().enumerate() {
                let n = plan.count(pair.0, pair.1);
                let mut counts = plan.modules.clone();
                counts.insert(pair, n + 1);
                if let Ok(up) = InvestmentPlan::new(&case, counts) {
                    let forward = stage_rate(&case, s, &up) - fresh;
                    assert!(out.subgradient[k] <= forward + 1e-6, "pair {k}: {} > {forward}", out.subgradient[k]);
                }
                if n > 0 {
                    let mut counts = plan.modules.clone();
                    counts.insert(pair, n - 1);
                    let down = InvestmentPlan::new(&case, counts).unwrap();
                    let backward = fresh - stage_rate(&case, s, &down);
                    assert!(out.subgradient[k] >= backward - 1e-6, "pair {k}: {} < {backward}", out.subgradient[k]);
                }
            }
        }
    }
}

#[test]
fn objective_is_monotone_in_polygon_sides() {
    let case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let mut prev = f64::NEG_INFINITY;
    for k in [3, 6, 12, 24] {
        let opts = PlannerOptions { relaxation: RelaxationConfig { polygon_sides: k, sqrt_breakpoints: 4 }, shed_price: None };
        let v = solve_de(&case, &set, &opts).2.objective_value.unwrap();
        assert!(v >= prev - 1e-6 * v.abs(), "K={k}: {v} < {prev}");
        prev = v;
    }
}

#[test]
fn objective_is_monotone_in_budget() {
    let mut case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let mut prev = f64::INFINITY;
    for budget in [0.0, 300_000.0, 1_000_000.0] {
        case.economics.budget = Some(budget);
        let v = solve_de(&case, &set, &PlannerOptions::default()).2.objective_value.unwrap();
        assert!(v <= prev + 1e-6 * v.abs(), "budget {budget}: {v} > {prev}");
        prev = v;
    }
}

#[test]
fn scaling_all_prices_scales_the_optimum() {
    let case = bundled_case("case4").unwrap();
    let set = three_scenarios(&case);
    let opts = PlannerOptions::default();
    let (prob, idx, sol) = solve_de(&case, &set, &opts);
    let (plan, _) = extract_solution(&prob, &sol, &idx, &case, &set.scenarios, &opts).unwrap();
    let c = 3.7;
    let mut scaled = case.clone();
    for t in [&mut scaled.catalog.pv, &mut scaled.catalog.wt, &mut scaled.catalog.cg] {
        t.inv_cost *= c;
        t.om_cost *= c;
    }
    scaled.economics.loss_price *= c;
    let mut sset = set.clone();
    sset.scenarios.iter_mut().for_each(|s| s.import_price *= c);
    let (sp, sidx, ssol) = solve_de(&scaled, &sset, &opts);
    let v = sol.objective_value.unwrap();
    let sv = ssol.objective_value.unwrap();
    assert!((sv - c * v).abs() <= 1e-6 * sv, "{sv} vs {}", c * v);
    // the original plan stays optimal within the MIP gap
    let mut fixed = sp.clone();
    for (k, &j) in sidx.x.iter().enumerate() {
        let n = plan.key()[k] as f64;
        fixed.variables[j].lower = n;
        fixed.variables[j].upper = n;
    }
    let fv = HighsBackend.solve(&fixed, &SolveOptions::default()).unwrap().objective_value.unwrap();
    assert!(fv <= sv * (1.0 + 2e-6), "{fv} vs {sv}");
}

fn mc_rows(case: &Case) -> (MilpProblem, ModelIndex) {
    let set = three_scenarios(case);
    build_deterministic_equivalent(case, &set, &PlannerOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mccormick_rows_hold_for_true_products(u in 0.0f64..=1.0, t in 0.0f64..=1.0, line in 0usize..3) {
        let case = bundled_case("case4").unwrap();
        let (prob, idx) = mc_rows(&case);
        let net = &case.network;
        let blk = &idx.blocks[0];
        let (parent, _) = idx.ends[line];
        let root = net.bus_position(net.substation).unwrap();
        let (lo, hi) = if parent == root { (1.0, 1.0) } else { (net.v_min.powi(2), net.v_max.powi(2)) };
        let a = lo + u * (hi - lo);
        let b = t * net.lines[line].i_max_pu.powi(2);
        let mut values = vec![0.0; prob.variables.len()];
        values[blk.v2[parent]] = a;
        values[blk.i2[line]] = b;
        values[blk.w[line]] = a * b;
        for c in prob.constraints.iter().filter(|c| c.name.starts_with("mc") && c.terms.iter().any(|&(j, _)| j == blk.w[line])) {
            prop_assert!(c.normalized_violation(&values) <= 1e-12, "{} violated at ({a}, {b})", c.name);
        }
    }

    #[test]
    fn disc_points_survive_the_polygon(rho in 0.0f64..=1.0, theta in 0.0f64..std::f64::consts::TAU, slack in 0.0f64..=1.0, line in 0usize..3) {
        let case = bundled_case("case4").unwrap();
        let (prob, idx) = mc_rows(&case);
        let blk = &idx.blocks[0];
        let w_max = prob.variables[blk.w[line]].upper;
        // any (p, q, w) with p² + q² ≤ w ≤ w_max
        let w = w_max * slack;
        let s = rho * w.sqrt();
        let mut values = vec![0.0; prob.variables.len()];
        values[blk.p[line]] = s * theta.cos();
        values[blk.q[line]] = s * theta.sin();
        values[blk.w[line]] = w;
        values[blk.mag[line]] = w.sqrt();
        let rows = prob.constraints.iter().filter(|c| (c.name.starts_with("poly") || c.name.starts_with("sqrt")) && c.terms.iter().any(|&(j, _)| j == blk.mag[line]));
        let mut n = 0;
        for c in rows {
            n += 1;
            prop_assert!(c.normalized_violation(&values) <= 1e-12, "{} cuts ({s}, {theta}, {w})", c.name);
        }
        prop_assert_eq!(n, 16);
    }
}
