use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dgplan_core::grid_case::load_case;
use dgplan_core::milp::{Backend, HighsBackend, SolveOptions, SolveStatus};
use dgplan_core::planner::{build_second_stage, enumerate_plans, PlannerOptions};
use dgplan_core::scenario::ScenarioSet;

const HOURS: &str = "336";

fn dgplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgplan")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dgplan(args);
    assert!(
        out.status.success(),
        "dgplan {args:?} exited {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn case4() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/cases/case4.case")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Two weeks of synthetic weather and demand.
fn data(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    ok(&["synth", "--seed", "3", "--hours", HOURS, "--out", s(&path)]);
    path
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).expect("csv opens").records().count()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("file exists")).expect("valid JSON")
}

#[test]
fn cluster_writes_scenarios_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    for k in [1, 10] {
        let out = dir.path().join(format!("k{k}"));
        ok(&["cluster", "--case", "case4", "--data", s(&d), "--k", &k.to_string(), "--output-dir", s(&out)]);
        let set = ScenarioSet::read_csv(out.join("scenarios.csv")).unwrap();
        assert_eq!(set.len(), k);
        assert!((set.scenarios.iter().map(|s| s.prob).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(csv_rows(&out.join("cluster_summary.csv")), k);
        let sizes: usize = csv::Reader::from_path(out.join("cluster_summary.csv"))
            .unwrap()
            .records()
            .map(|r| r.unwrap()[1].parse::<usize>().unwrap())
            .sum();
        assert_eq!(sizes.to_string(), HOURS);
    }
}

#[test]
fn missing_data_is_an_input_error() {
    let out = dgplan(&["cluster", "--case", "case4", "--data", "/nonexistent/hours.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/hours.csv"));
}

#[test]
fn inconsistent_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.case");
    let text = std::fs::read_to_string(case4()).unwrap().replace("v_max = 1.05", "v_max = 0.85");
    std::fs::write(&bad, text).unwrap();
    let d = data(dir.path());
    let out = dgplan(&["plan", "--case", s(&bad), "--data", s(&d), "--k", "2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("v_min"));
}

/// Cheapest plan over every admissible module count, second stages solved
/// one scenario at a time.
fn enumeration_oracle(case_path: &Path, set: &ScenarioSet) -> (f64, Vec<f64>) {
    let case = load_case(case_path).unwrap();
    let opts = PlannerOptions::default();
    let mut best = (f64::INFINITY, vec![]);
    for plan in enumerate_plans(&case) {
        let mut total = plan.invest_cost;
        for sc in &set.scenarios {
            let (p, _) = build_second_stage(&case, sc, &plan, &opts).unwrap();
            let sol = HighsBackend.solve(&p, &SolveOptions::default()).unwrap();
            total += match sol.status {
                SolveStatus::Optimal => sc.hours * sol.objective_value.unwrap(),
                _ => f64::INFINITY,
            };
        }
        if total < best.0 {
            best = (total, plan.installed_kw(&case.catalog).to_vec());
        }
    }
    best
}

#[test]
fn plan_matches_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    ok(&["cluster", "--case", s(&case4()), "--data", s(&d), "--k", "3", "--output-dir", s(dir.path())]);
    let scen = dir.path().join("scenarios.csv");
    let out = dir.path().join("plan");
    ok(&["plan", "--case", s(&case4()), "--scenarios", s(&scen), "--output-dir", s(&out)]);

    let (oracle, kw) = enumeration_oracle(&case4(), &ScenarioSet::read_csv(&scen).unwrap());
    let plan = json(&out.join("plan.json"));
    let obj = plan["objective"].as_f64().unwrap();
    assert!((obj - oracle).abs() <= 1e-6 * oracle, "{obj} vs {oracle}");
    let got: Vec<f64> = ["pv", "wt", "cg"].iter().map(|t| plan["installed_kw"][t].as_f64().unwrap()).collect();
    assert_eq!(got, kw);
    assert_eq!(csv_rows(&out.join("operation.csv")), 3);
    let costs = std::fs::read_to_string(out.join("costs.csv")).unwrap();
    let total: f64 = costs.lines().find_map(|l| l.strip_prefix("total,")).unwrap().parse().unwrap();
    assert!((total - obj).abs() <= 1e-6 * obj);
}

#[test]
fn zero_budget_builds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    ok(&["plan", "--case", "case4", "--data", s(&d), "--k", "4", "--budget", "0", "--output-dir", s(dir.path())]);
    let plan = json(&dir.path().join("plan.json"));
    assert_eq!(plan["invest_cost"].as_f64(), Some(0.0));
    for t in ["pv", "wt", "cg"] {
        assert_eq!(plan["installed_kw"][t].as_f64(), Some(0.0));
    }
}

#[test]
fn external_solver_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let native = dir.path().join("native");
    let external = dir.path().join("external");
    ok(&["plan", "--case", "case4", "--data", s(&d), "--k", "3", "--output-dir", s(&native)]);
    let cmd = format!("'{}' solve-mps --mps {{mps}} --sol {{sol}}", env!("CARGO_BIN_EXE_dgplan"));
    let out = Command::new(env!("CARGO_BIN_EXE_dgplan"))
        .env("DGPLAN_SOLVER_CMD", cmd)
        .args(["plan", "--case", "case4", "--data", s(&d), "--k", "3", "--solver", "external", "--output-dir", s(&external)])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&native.join("plan.json"))["objective"].as_f64().unwrap();
    let b = json(&external.join("plan.json"))["objective"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
}

#[test]
fn external_solver_needs_a_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_dgplan"))
        .env_remove("DGPLAN_SOLVER_CMD")
        .args(["plan", "--case", "case4", "--data", s(&d), "--k", "2", "--solver", "external", "--output-dir", s(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn saa_on_every_hour_closes_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let run = |out: &Path, threads: &str| {
        ok(&[
            "stability", "--case", "case4", "--data", s(&d), "--n-values", &format!("{HOURS},24"), "--replications", "2",
            "--threads", threads, "--output-dir", s(out),
        ]);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a, "1");
    run(&b, "2");

    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files.len(), 7, "{files:?}");
    for f in ["fig_gap.csv", "fig_insample.csv", "fig_outsample.csv", "fig_mix.csv", "fig_time.csv"] {
        assert!(files.iter().any(|x| x == f), "{f} missing");
    }
    assert_eq!(csv_rows(&a.join("fig_gap.csv")), 2);
    assert_eq!(csv_rows(&a.join("fig_insample.csv")), 4);

    let report = json(&a.join(files.iter().find(|f| f.ends_with(".json")).unwrap()));
    let gt = report["ground_truth_value"].as_f64().unwrap();
    let table = a.join(files.iter().find(|f| f.starts_with("saa_") && f.ends_with(".csv")).unwrap());
    let mut full = 0;
    for row in csv::Reader::from_path(&table).unwrap().records() {
        let row = row.unwrap();
        if &row[0] != HOURS {
            continue;
        }
        full += 1;
        let (lb, ub): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
        assert!((lb - gt).abs() <= 1e-9 * gt && (ub - gt).abs() <= 1e-9 * gt, "{lb} {ub} {gt}");
    }
    assert_eq!(full, 2);
    for f in files.iter().filter(|f| *f != "fig_time.csv") {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs across thread counts");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let out = dir.path().join("from-config");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("[run]\ncase = case4\ndata = {}\nk = 6\noutput_dir = {}\n", s(&d), s(&out))).unwrap();
    ok(&["--config", s(&cfg), "cluster"]);
    assert_eq!(csv_rows(&out.join("scenarios.csv")), 6);
    ok(&["--config", s(&cfg), "cluster", "--k", "2"]);
    assert_eq!(csv_rows(&out.join("scenarios.csv")), 2);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(dgplan(&["--config", s(&cfg), "cluster"]).status.code(), Some(2));
}

#[test]
fn export_mps_writes_model_and_names() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path());
    let mps = dir.path().join("de.mps");
    ok(&["export-mps", "--case", "case4", "--data", s(&d), "--k", "2", "--out", s(&mps)]);
    let text = std::fs::read_to_string(&mps).unwrap();
    assert!(text.contains("ROWS") && text.contains("COLUMNS"));
    assert!(std::fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().contains("names")));
}
