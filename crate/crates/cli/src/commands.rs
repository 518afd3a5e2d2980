use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use dgplan_core::grid_case::{bundled_case, load_case, Case, CaseError, BUNDLED_CASES};
use dgplan_core::milp::{
    export_mps, read_mps_with_highs, Backend, FileExchangeBackend, MpsNames, SolveOptions, SolveStatus, SolverError,
    SOLVER_CMD_ENV,
};
use dgplan_core::planner::{
    build_deterministic_equivalent, check_physics, extract_solution, PlanError, PlannerOptions, RelaxationConfig,
};
use dgplan_core::saa::{run_stability, solve_deterministic_equivalent, write_reports, SaaConfig, SaaError};
use dgplan_core::scenario::{cluster_records, KMeansOptions, ScenarioError, ScenarioSet};
use dgplan_core::timeseries::{
    ingest_csv, standardize, synth_dataset, ClimateProfile, Dataset, GapPolicy, IngestError,
};

use crate::config::RunConfig;
use crate::{CliError, Cli, Command, DataArgs, GapPolicyArg, ModelArgs, Profile, SaaArgs, SolverArgs, SolverKind};

const DEFAULT_OUTPUT_DIR: &str = "dgplan-out";
const DEFAULT_K: usize = 10;
const DEFAULT_SEED: u64 = 7;

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidProblem(_) | SolverError::Io { .. } => CliError::Input(e.to_string()),
            _ => CliError::Solve(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Case(_) | PlanError::Scenario(_) | PlanError::InvalidPlan(_) => CliError::Input(e.to_string()),
            PlanError::Solver(s) => s.into(),
            _ => CliError::Solve(e.to_string()),
        }
    }
}

impl From<SaaError> for CliError {
    fn from(e: SaaError) -> Self {
        match e {
            SaaError::Config(_) | SaaError::Scenario(_) | SaaError::Io(_) | SaaError::Csv(_) => CliError::Input(e.to_string()),
            SaaError::Plan(p) => p.into(),
            _ => CliError::Solve(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let threads = cfg.pick(cli.threads, "threads")?.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Input("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Ingest { data, out } => ingest(cfg, &data, out),
        Command::Synth { seed, hours, profile, out } => synth(cfg, seed, hours, profile, &out),
        Command::Cluster { case, data, k, seed, output_dir } => {
            let model = ModelArgs {
                case,
                data,
                scenarios: None,
                k,
                seed,
                budget: None,
                shed_price: None,
                polygon_sides: None,
                sqrt_breakpoints: None,
            };
            cluster(cfg, &model, output_dir)
        }
        Command::Plan { model, solver, output_dir, mps } => plan(cfg, &model, &solver, output_dir, mps),
        Command::Saa(args) => saa(cfg, &args, threads, false),
        Command::Stability(args) => saa(cfg, &args, threads, true),
        Command::ExportMps { model, out } => export(cfg, &model, &out),
        Command::SolveMps { mps, sol } => solve_mps(&mps, &sol),
    }
}

fn resolve_case(cfg: &RunConfig, model: &ModelArgs) -> Result<Case, CliError> {
    let name = cfg
        .pick(model.case.case.clone(), "case")?
        .ok_or_else(|| CliError::Input("no case given (--case FILE or a bundled name)".into()))?;
    let path = Path::new(&name);
    let mut case = if path.exists() {
        load_case(path)?
    } else if BUNDLED_CASES.contains(&name.as_str()) || name == "case34" {
        bundled_case(&name)?
    } else {
        return Err(CliError::Input(format!("case file {name} does not exist and is not a bundled case")));
    };
    match cfg.raw("budget") {
        Some("none") if model.budget.is_none() => case.economics.budget = None,
        _ => {
            if let Some(b) = cfg.pick(model.budget, "budget")? {
                case.economics.budget = Some(b);
            }
        }
    }
    case.validate()?;
    Ok(case)
}

fn existing(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Input(format!("data file {} does not exist", path.display())))
    }
}

fn load_data(cfg: &RunConfig, data: &DataArgs) -> Result<Dataset, CliError> {
    let path = cfg
        .pick(data.data.clone(), "data")?
        .ok_or_else(|| CliError::Input("no data file given (--data FILE)".into()))?;
    let path = existing(path)?;
    let policy = match cfg.pick(data.gap_policy, "gap_policy")?.unwrap_or(GapPolicyArg::Reject) {
        GapPolicyArg::Reject => GapPolicy::Reject,
        GapPolicyArg::ForwardFill => GapPolicy::ForwardFill,
    };
    Ok(ingest_csv(&path, policy)?)
}

fn planner_options(cfg: &RunConfig, model: &ModelArgs) -> Result<PlannerOptions, CliError> {
    let d = RelaxationConfig::default();
    let relaxation = RelaxationConfig {
        polygon_sides: cfg.pick(model.polygon_sides, "polygon_sides")?.unwrap_or(d.polygon_sides),
        sqrt_breakpoints: cfg.pick(model.sqrt_breakpoints, "sqrt_breakpoints")?.unwrap_or(d.sqrt_breakpoints),
    };
    Ok(PlannerOptions { relaxation, shed_price: cfg.pick(model.shed_price, "shed_price")? })
}

fn solve_options(cfg: &RunConfig, solver: &SolverArgs) -> Result<SolveOptions, CliError> {
    let d = SolveOptions::default();
    Ok(SolveOptions {
        mip_gap_target: cfg.pick(solver.mip_gap, "mip_gap")?.unwrap_or(d.mip_gap_target),
        time_limit: cfg.pick(solver.time_limit, "time_limit")?.unwrap_or(d.time_limit),
        ..d
    })
}

fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = cfg.pick(flag, "output_dir")?.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

/// Scenario CSV when given, otherwise clusters of the data file.
fn scenarios(cfg: &RunConfig, case: &Case, model: &ModelArgs) -> Result<ScenarioSet, CliError> {
    if let Some(path) = cfg.pick(model.scenarios.clone(), "scenarios")? {
        let set = ScenarioSet::read_csv(existing(path)?)?;
        set.validate(case.economics.horizon_hours)?;
        return Ok(set);
    }
    let ds = load_data(cfg, &model.data)?;
    let k = cfg.pick(model.k, "k")?.unwrap_or(DEFAULT_K);
    let seed = cfg.pick(model.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    Ok(cluster_records(ds.records(), ds.peak_demand_kw(), k, seed, &case.catalog, &case.economics, KMeansOptions::default())?.0)
}

fn ingest(cfg: &RunConfig, data: &DataArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let ds = load_data(cfg, data)?;
    let r = ds.records();
    let mean = |f: fn(&dgplan_core::timeseries::HourlyRecord) -> f64| r.iter().map(f).sum::<f64>() / r.len() as f64;
    println!("hours          {}", ds.len());
    println!("first          {}", r[0].timestamp);
    println!("last           {}", r[r.len() - 1].timestamp);
    println!("mean ghi       {:.2} W/m2", mean(|x| x.ghi));
    println!("mean wind      {:.3} m/s", mean(|x| x.wind));
    println!("mean temp      {:.2} C", mean(|x| x.temp));
    println!("mean demand    {:.2} kW", mean(|x| x.demand_kw));
    println!("peak demand    {:.2} kW", ds.peak_demand_kw());
    if let Some(out) = out {
        ds.write_csv(&out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn synth(cfg: &RunConfig, seed: Option<u64>, hours: usize, profile: Profile, out: &Path) -> Result<(), CliError> {
    let seed = cfg.pick(seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let profile = match profile {
        Profile::Tropical => ClimateProfile::Tropical,
        Profile::Temperate => ClimateProfile::Temperate,
    };
    let ds = synth_dataset(seed, hours, profile)?;
    ds.write_csv(out)?;
    println!("wrote {} hours to {}", ds.len(), out.display());
    Ok(())
}

fn cluster(cfg: &RunConfig, model: &ModelArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let case = resolve_case(cfg, model)?;
    let ds = load_data(cfg, &model.data)?;
    let k = cfg.pick(model.k, "k")?.unwrap_or(DEFAULT_K);
    let seed = cfg.pick(model.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let dir = output_dir(cfg, out)?;
    let (set, km) = cluster_records(ds.records(), ds.peak_demand_kw(), k, seed, &case.catalog, &case.economics, KMeansOptions::default())?;
    let st = standardize(&ds)?;
    let scen_path = dir.join("scenarios.csv");
    set.write_csv(&scen_path)?;

    let mut wcss = vec![0.0; k];
    for (i, &j) in km.assignment.iter().enumerate() {
        wcss[j] += st.z.row(i).iter().zip(km.centroids.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    let summary_path = dir.join("cluster_summary.csv");
    let mut w = csv::Writer::from_path(&summary_path).map_err(|e| io_err(&summary_path, e))?;
    let werr = |e: csv::Error| io_err(&summary_path, e);
    w.write_record(["cluster", "size", "prob", "ghi", "wind", "temp", "demand_kw", "wcss"]).map_err(werr)?;
    for j in 0..k {
        let phys = st.unstandardize(km.centroids.row(j).as_slice().expect("standard layout"));
        let mut row = vec![j.to_string(), km.sizes[j].to_string(), set.scenarios[j].prob.to_string()];
        row.extend(phys.iter().map(f64::to_string));
        row.push(wcss[j].to_string());
        w.write_record(&row).map_err(werr)?;
    }
    w.flush().map_err(|e| io_err(&summary_path, e))?;
    println!("k = {k}: total WCSS {:.6}, {} Lloyd iterations, converged {}", km.wcss, km.iterations, km.converged);
    println!("wrote {} and {}", scen_path.display(), summary_path.display());
    Ok(())
}

fn external_backend() -> Result<FileExchangeBackend, CliError> {
    FileExchangeBackend::from_env()
        .ok_or_else(|| CliError::Input(format!("--solver external needs {SOLVER_CMD_ENV} set to a command template")))
}

fn plan(cfg: &RunConfig, model: &ModelArgs, solver: &SolverArgs, out: Option<PathBuf>, mps: Option<PathBuf>) -> Result<(), CliError> {
    let case = resolve_case(cfg, model)?;
    let set = scenarios(cfg, &case, model)?;
    let opts = planner_options(cfg, model)?;
    let solve = solve_options(cfg, solver)?;
    let dir = output_dir(cfg, out)?;
    let (problem, index, sol) = match solver.solver {
        SolverKind::Highs => solve_deterministic_equivalent(&case, &set, &opts, &solve)?,
        SolverKind::External => {
            let external = external_backend()?;
            let (problem, index) = build_deterministic_equivalent(&case, &set, &opts)?;
            let sol = external.solve(&problem, &solve)?;
            (problem, index, sol)
        }
    };
    if let Some(path) = &mps {
        export_mps(&problem, path)?;
    }
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::LimitReached if sol.has_values() => {
            log::warn!("limit reached; reporting the incumbent with gap {:?}", sol.mip_gap)
        }
        other => return Err(CliError::Solve(format!("deterministic equivalent ended with status {other:?}"))),
    }
    let (plan, op) = extract_solution(&problem, &sol, &index, &case, &set.scenarios, &opts)?;
    let phys = check_physics(&case, &plan, &set.scenarios, &op, &opts);
    if !phys.is_ok() {
        return Err(CliError::Solve(format!("solution failed the physics check: {}", phys.violations.join("; "))));
    }
    let sb = case.network.s_base_kva;

    let objective = sol.objective_value.expect("extracted solutions have objectives");
    let kw = plan.installed_kw(&case.catalog);
    let plan_json = json!({
        "case": case.network.name,
        "scenarios": set.len(),
        "objective": objective,
        "mip_gap": sol.mip_gap,
        "invest_cost": plan.invest_cost,
        "operating_cost": op.operating_cost(&set.scenarios),
        "installed_kw": { "pv": kw[0], "wt": kw[1], "cg": kw[2] },
        "capacity_mix": plan.capacity_shares(&case.catalog),
        "modules": plan.to_json()["modules"],
    });
    let plan_path = dir.join("plan.json");
    fs::write(&plan_path, serde_json::to_string_pretty(&plan_json).expect("plain JSON") + "\n").map_err(|e| io_err(&plan_path, e))?;

    let op_path = dir.join("operation.csv");
    let mut w = csv::Writer::from_path(&op_path).map_err(|e| io_err(&op_path, e))?;
    let werr = |e: csv::Error| io_err(&op_path, e);
    w.write_record([
        "scenario", "prob", "hours", "import_kw", "import_kvar", "losses_kw", "pv_kw", "wt_kw", "cg_kw", "min_v", "max_v",
        "loss_cost", "import_cost", "om_cost", "shed_cost", "rate",
    ])
    .map_err(werr)?;
    let mut totals = [0.0f64; 4];
    for (s, o) in set.scenarios.iter().zip(&op.scenarios) {
        let losses: f64 = case.network.lines.iter().zip(&o.i2).map(|(l, i2)| l.r_pu * i2).sum::<f64>() * sb;
        let mut by_tech = [0.0; 3];
        for (&(_, t), pg) in op.pairs.iter().zip(&o.pg) {
            let k = dgplan_core::grid_case::Tech::ALL.iter().position(|&x| x == t).expect("known tech");
            by_tech[k] += pg * sb;
        }
        let v = |f: fn(f64, f64) -> f64, init| o.v2.iter().map(|x| x.sqrt()).fold(init, f);
        w.write_record([
            s.id.to_string(),
            s.prob.to_string(),
            s.hours.to_string(),
            (o.pss * sb).to_string(),
            (o.qss * sb).to_string(),
            losses.to_string(),
            by_tech[0].to_string(),
            by_tech[1].to_string(),
            by_tech[2].to_string(),
            v(f64::min, f64::INFINITY).to_string(),
            v(f64::max, 0.0).to_string(),
            o.loss_cost.to_string(),
            o.import_cost.to_string(),
            o.om_cost.to_string(),
            o.shed_cost.to_string(),
            o.rate().to_string(),
        ])
        .map_err(werr)?;
        for (t, c) in totals.iter_mut().zip([o.loss_cost, o.import_cost, o.om_cost, o.shed_cost]) {
            *t += s.hours * c;
        }
    }
    w.flush().map_err(|e| io_err(&op_path, e))?;

    let costs_path = dir.join("costs.csv");
    let mut w = csv::Writer::from_path(&costs_path).map_err(|e| io_err(&costs_path, e))?;
    let werr = |e: csv::Error| io_err(&costs_path, e);
    w.write_record(["item", "dollars"]).map_err(werr)?;
    let total = plan.invest_cost + totals.iter().sum::<f64>();
    for (item, v) in [
        ("investment", plan.invest_cost),
        ("losses", totals[0]),
        ("imports", totals[1]),
        ("operation_maintenance", totals[2]),
        ("unserved_demand", totals[3]),
        ("total", total),
    ] {
        w.write_record([item.to_string(), v.to_string()]).map_err(werr)?;
    }
    w.flush().map_err(|e| io_err(&costs_path, e))?;

    println!("objective      {objective:.2} $");
    println!("investment     {:.2} $", plan.invest_cost);
    println!("installed      PV {:.0} kW, WT {:.0} kW, CG {:.0} kW", kw[0], kw[1], kw[2]);
    println!("max residual   {:.2e} p.u.", phys.max_balance_residual.max(phys.max_vdrop_residual));
    println!("wrote {}, {} and {}", plan_path.display(), op_path.display(), costs_path.display());
    Ok(())
}

fn saa(cfg: &RunConfig, args: &SaaArgs, threads: usize, stability: bool) -> Result<(), CliError> {
    let case = resolve_case(cfg, &args.model)?;
    let ds = load_data(cfg, &args.model.data)?;
    let d = SaaConfig::default();
    let config = SaaConfig {
        n_values: cfg.pick_list(args.n_values.clone(), "n_values")?.unwrap_or(d.n_values),
        replications: cfg.pick(args.replications, "replications")?.unwrap_or(d.replications),
        ground_truth_n: cfg.pick(args.ground_truth_n, "ground_truth_n")?,
        eval_n: cfg.pick(args.eval_n, "eval_n")?,
        seed_base: cfg.pick(args.model.seed, "seed")?.unwrap_or(d.seed_base),
        threads,
        planner: planner_options(cfg, &args.model)?,
        solve: solve_options(cfg, &args.solver)?,
        ..d
    };
    if args.solver.solver != SolverKind::Highs {
        return Err(CliError::Input("SAA runs use the in-process HiGHS backend only".into()));
    }
    let dir = output_dir(cfg, args.output_dir.clone())?;
    let (report, st) = run_stability(&case, &ds, &config)?;
    let files = write_reports(&dir, &report, &st)?;

    println!("ground truth   {:.2} $", report.ground_truth_value);
    println!("{:>6} {:>16} {:>16} {:>14} {:>10} {:>10}", "n", "mean LB", "mean UB", "median gap", "in std", "out std");
    for (s, t) in report.per_n.iter().zip(&st.per_n) {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        let g = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2e}"));
        println!(
            "{:>6} {:>16} {:>16} {:>14} {:>10} {:>10}",
            s.n,
            f(s.lb.map(|x| x.mean)),
            f(s.ub.map(|x| x.mean)),
            f(s.gap.map(|x| x.median)),
            g(t.in_sample.map(|x| x.std)),
            g(t.out_sample.map(|x| x.std)),
        );
    }
    if stability {
        for t in &st.per_n {
            if let Some(m) = t.mean_mix {
                println!("n = {:>5}: mean mix PV {:.3}, WT {:.3}, CG {:.3}", t.n, m[0], m[1], m[2]);
            }
        }
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    let failures = report.failures();
    if failures > 0 {
        for r in report.replicas.iter().filter_map(|r| r.error.as_ref()) {
            eprintln!("{r}");
        }
        return Err(CliError::Solve(format!("{failures} replica(s) failed")));
    }
    Ok(())
}

fn export(cfg: &RunConfig, model: &ModelArgs, out: &Path) -> Result<(), CliError> {
    let case = resolve_case(cfg, model)?;
    let set = scenarios(cfg, &case, model)?;
    let (problem, _) = build_deterministic_equivalent(&case, &set, &planner_options(cfg, model)?)?;
    export_mps(&problem, out)?;
    println!(
        "wrote {} ({} columns, {} rows, {} nonzeros) and {}",
        out.display(),
        problem.variables.len(),
        problem.constraints.len(),
        problem.num_nonzeros(),
        MpsNames::sidecar_path(out).display()
    );
    Ok(())
}

fn solve_mps(mps: &Path, sol: &Path) -> Result<(), CliError> {
    let summary = read_mps_with_highs(mps, &SolveOptions::default())?;
    let mut text = String::new();
    match &summary.solution {
        Some(values) => {
            text.push_str("status optimal\n");
            for (name, v) in summary.col_names.iter().zip(values) {
                text.push_str(&format!("{name} {v}\n"));
            }
        }
        None => text.push_str("status infeasible\n"),
    }
    fs::write(sol, text).map_err(|e| io_err(sol, e))
}
