//! Sample average approximation: replicated lower bounds from clustered
//! bootstrap samples, fixed-plan upper bounds on the empirical distribution,
//! and the stability statistics derived from them.

mod benders;
mod report;
mod stats;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid_case::Case;
use crate::milp::{Backend, HighsBackend, MilpProblem, MilpSolution, SolveOptions, SolveStatus};
use crate::planner::{
    build_deterministic_equivalent, extract_solution, InvestmentPlan, ModelIndex, PlanError, PlannerOptions, SecondStage,
};
use crate::scenario::{cluster_records, KMeansOptions, ScenarioError, ScenarioSet};
use crate::timeseries::Dataset;

pub use benders::{solve_benders, BendersOptions, BendersResult};
pub use report::{config_hash, write_reports, FIGURE_FILES};
pub use stats::{student_t_quantile, Stats};

/// Second-stage solves are grouped in chunks of this many scenarios, each
/// on a fresh solver session, so results do not depend on thread count.
pub const EVAL_CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum SaaError {
    #[error("invalid SAA configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("plan is infeasible in {} scenario(s), first ids {:?}", .0.len(), first_ids(.0))]
    Infeasible(Vec<usize>),
    #[error("ground truth: {0}")]
    GroundTruth(Box<SaaError>),
    #[error("Benders did not converge in {iterations} iterations (gap {gap:.3e})")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("report output: {0}")]
    Io(#[from] std::io::Error),
    #[error("report output: {0}")]
    Csv(#[from] csv::Error),
}

fn first_ids(ids: &[usize]) -> &[usize] {
    &ids[..ids.len().min(5)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaConfig {
    pub n_values: Vec<usize>,
    pub replications: usize,
    /// Clusters behind the ground truth; `None` uses every hour.
    pub ground_truth_n: Option<usize>,
    /// Clusters for upper-bound evaluation; `None` uses every hour.
    pub eval_n: Option<usize>,
    pub seed_base: u64,
    /// Worker threads for replicas and subproblems.
    pub threads: usize,
    /// Sets larger than this are solved by Benders decomposition instead of
    /// the deterministic equivalent.
    pub de_max_scenarios: usize,
    pub planner: PlannerOptions,
    pub solve: SolveOptions,
    pub kmeans: KMeansOptions,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self {
            n_values: vec![10, 50, 200],
            replications: 10,
            ground_truth_n: None,
            eval_n: None,
            seed_base: 7,
            threads: 1,
            de_max_scenarios: 400,
            planner: PlannerOptions::default(),
            solve: SolveOptions::default(),
            kmeans: KMeansOptions::default(),
        }
    }
}

impl SaaConfig {
    pub fn validate(&self, data_points: usize) -> Result<(), SaaError> {
        let bad = |m: String| Err(SaaError::Config(m));
        if self.n_values.is_empty() {
            return bad("no scenario counts given".into());
        }
        if self.replications == 0 || self.threads == 0 || self.de_max_scenarios == 0 {
            return bad("replications, threads and the DE limit must be at least 1".into());
        }
        for (what, n) in self.n_values.iter().map(|&n| ("n", Some(n))).chain([("ground_truth_n", self.ground_truth_n), ("eval_n", self.eval_n)]) {
            match n {
                Some(0) => return bad(format!("{what} must be at least 1")),
                Some(n) if n > data_points => return bad(format!("{what} = {n} exceeds the {data_points} data points")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Seed of replica `r` at size `n`, one ChaCha stream per (n, r).
pub fn replica_seed(seed_base: u64, n: usize, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base);
    rng.set_stream(((n as u64) << 32) | r as u64);
    rng.next_u64()
}

/// Scenario set of replica `r` at size `n`: k-means with k = n on a
/// bootstrap resample of the hours. With n equal to the number of hours the
/// empirical set itself is returned for every replica.
pub fn sample_scenarios(
    case: &Case,
    ds: &Dataset,
    n: usize,
    seed: u64,
    kmeans: KMeansOptions,
) -> Result<ScenarioSet, SaaError> {
    let records = ds.records();
    let peak = ds.peak_demand_kw();
    if n == records.len() {
        return Ok(ScenarioSet::empirical(records, peak, &case.catalog, &case.economics));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resample: Vec<_> = (0..records.len()).map(|_| records[rng.random_range(0..records.len())]).collect();
    let km_seed = rng.next_u64();
    Ok(cluster_records(&resample, peak, n, km_seed, &case.catalog, &case.economics, kmeans)?.0)
}

/// k-means of the full dataset, or the empirical set when `k` is `None`.
fn full_data_set(case: &Case, ds: &Dataset, k: Option<usize>, seed: u64, kmeans: KMeansOptions) -> Result<ScenarioSet, SaaError> {
    let records = ds.records();
    match k {
        Some(k) if k < records.len() => {
            Ok(cluster_records(records, ds.peak_demand_kw(), k, seed, &case.catalog, &case.economics, kmeans)?.0)
        }
        _ => Ok(ScenarioSet::empirical(records, ds.peak_demand_kw(), &case.catalog, &case.economics)),
    }
}

/// Expected operating cost of a fixed plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEvaluation {
    /// Σ hours·rate over the set, $.
    pub operating_cost: f64,
    /// Derivative of `operating_cost` per candidate pair.
    pub subgradient: Vec<f64>,
    /// Scenario ids without a feasible operating point.
    pub infeasible: Vec<usize>,
}

/// Solves every second stage of `set` under `plan`.
pub fn evaluate_plan(
    case: &Case,
    plan: &InvestmentPlan,
    set: &ScenarioSet,
    opts: &PlannerOptions,
    solve: &SolveOptions,
) -> Result<PlanEvaluation, SaaError> {
    let npairs = plan.modules.len();
    let chunks: Vec<_> = set.scenarios.chunks(EVAL_CHUNK).collect();
    let parts = chunks
        .par_iter()
        .map(|chunk| -> Result<Vec<(f64, Vec<f64>, bool)>, SaaError> {
            let mut stage = SecondStage::open(&HighsBackend, case, &chunk[0], plan, opts, solve)?;
            chunk
                .iter()
                .map(|s| {
                    let out = stage.solve(s)?;
                    Ok((s.hours * out.rate, out.subgradient.iter().map(|g| s.hours * g).collect(), out.status == SolveStatus::Infeasible))
                })
                .collect()
        })
        .collect::<Vec<_>>();
    let mut eval = PlanEvaluation { operating_cost: 0.0, subgradient: vec![0.0; npairs], infeasible: vec![] };
    for (chunk, part) in chunks.iter().zip(parts) {
        for (s, (cost, grad, infeasible)) in chunk.iter().zip(part?) {
            if infeasible {
                eval.infeasible.push(s.id);
                continue;
            }
            eval.operating_cost += cost;
            for (acc, g) in eval.subgradient.iter_mut().zip(grad) {
                *acc += g;
            }
        }
    }
    if !eval.infeasible.is_empty() {
        eval.operating_cost = f64::INFINITY;
    }
    Ok(eval)
}

/// Upper bound of a fixed plan: investment plus expected operating cost on
/// `eval`. Infeasible scenarios give `SaaError::Infeasible`.
pub fn evaluate_ub(
    case: &Case,
    plan: &InvestmentPlan,
    eval: &ScenarioSet,
    opts: &PlannerOptions,
    solve: &SolveOptions,
) -> Result<f64, SaaError> {
    let e = evaluate_plan(case, plan, eval, opts, solve)?;
    if !e.infeasible.is_empty() {
        return Err(SaaError::Infeasible(e.infeasible));
    }
    Ok(plan.invest_cost + e.operating_cost)
}

/// The deterministic equivalent of `set` solved by HiGHS with the Benders
/// plan as first incumbent. HiGHS's own primal heuristics can spend most of
/// a time limit before finding a plan that good; the start leaves only the
/// bound to prove. Without a Benders plan the solve starts cold.
pub fn solve_deterministic_equivalent(
    case: &Case,
    set: &ScenarioSet,
    planner: &PlannerOptions,
    solve: &SolveOptions,
) -> Result<(MilpProblem, ModelIndex, MilpSolution), SaaError> {
    let (p, idx) = build_deterministic_equivalent(case, set, planner)?;
    let sol = match solve_benders(case, set, planner, solve, &BendersOptions::default()) {
        Ok(b) => {
            let start: Vec<(usize, f64)> =
                idx.x.iter().zip(&idx.pairs).map(|(&j, pair)| (j, b.plan.modules.get(pair).copied().unwrap_or(0) as f64)).collect();
            HighsBackend.solve_from(&p, solve, &start)
        }
        Err(e) => {
            log::warn!("no start plan for the deterministic equivalent: {e}");
            HighsBackend.solve(&p, solve)
        }
    }
    .map_err(PlanError::from)?;
    Ok((p, idx, sol))
}

/// Optimal value and plan of the two-stage problem on `set`.
pub fn solve_two_stage(case: &Case, set: &ScenarioSet, cfg: &SaaConfig) -> Result<(f64, InvestmentPlan), SaaError> {
    if set.len() <= cfg.de_max_scenarios {
        let (p, idx) = build_deterministic_equivalent(case, set, &cfg.planner)?;
        let sol = HighsBackend.solve(&p, &cfg.solve).map_err(PlanError::from)?;
        if sol.status == SolveStatus::Infeasible {
            return Err(SaaError::Infeasible(vec![]));
        }
        let (plan, _) = extract_solution(&p, &sol, &idx, case, &set.scenarios, &cfg.planner)?;
        Ok((sol.objective_value.expect("extracted solutions have objectives"), plan))
    } else {
        let r = solve_benders(case, set, &cfg.planner, &cfg.solve, &BendersOptions::default())?;
        Ok((r.value, r.plan))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult {
    pub n: usize,
    pub replica: usize,
    pub seed: u64,
    pub lb: Option<f64>,
    pub plan: Option<InvestmentPlan>,
    pub ub: Option<f64>,
    /// ub − lb from the same two values.
    pub gap: Option<f64>,
    /// Wall seconds of the lower-bound solve, clustering included.
    pub lb_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub n: usize,
    pub lb: Option<Stats>,
    pub ub: Option<Stats>,
    pub gap: Option<Stats>,
    pub mean_lb_seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaReport {
    pub config: SaaConfig,
    pub ground_truth_value: f64,
    pub ground_truth_plan: InvestmentPlan,
    /// Ordered by n (as configured), then replica.
    pub replicas: Vec<ReplicaResult>,
    pub per_n: Vec<SizeSummary>,
}

impl SaaReport {
    pub fn failures(&self) -> usize {
        self.replicas.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn replicas_at(&self, n: usize) -> impl Iterator<Item = &ReplicaResult> {
        self.replicas.iter().filter(move |r| r.n == n)
    }
}

/// Memoized upper bounds per plan for one evaluation set.
struct UbCache<'a> {
    case: &'a Case,
    eval: &'a ScenarioSet,
    cfg: &'a SaaConfig,
    values: Mutex<HashMap<Vec<u32>, Result<f64, String>>>,
}

impl UbCache<'_> {
    fn get(&self, plan: &InvestmentPlan) -> Result<f64, String> {
        let key = plan.key();
        if let Some(v) = self.values.lock().expect("cache lock").get(&key) {
            return v.clone();
        }
        let v = evaluate_ub(self.case, plan, self.eval, &self.cfg.planner, &self.cfg.solve).map_err(|e| e.to_string());
        self.values.lock().expect("cache lock").insert(key, v.clone());
        v
    }
}

fn run_replica(case: &Case, ds: &Dataset, cfg: &SaaConfig, cache: &UbCache, n: usize, r: usize) -> ReplicaResult {
    let seed = replica_seed(cfg.seed_base, n, r);
    let mut out = ReplicaResult { n, replica: r, seed, lb: None, plan: None, ub: None, gap: None, lb_seconds: 0.0, error: None };
    let start = Instant::now();
    let lb = sample_scenarios(case, ds, n, seed, cfg.kmeans).and_then(|set| solve_two_stage(case, &set, cfg));
    out.lb_seconds = start.elapsed().as_secs_f64();
    let (lb, plan) = match lb {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(format!("n = {n}, replica {r}: lower bound: {e}"));
            return out;
        }
    };
    out.lb = Some(lb);
    match cache.get(&plan) {
        Ok(ub) => {
            out.ub = Some(ub);
            out.gap = Some(ub - lb);
        }
        Err(e) => out.error = Some(format!("n = {n}, replica {r}: upper bound: {e}")),
    }
    out.plan = Some(plan);
    out
}

/// Full SAA protocol. Failed replicas are recorded and left out of the
/// aggregates; a failed ground truth aborts the run.
pub fn run_saa(case: &Case, ds: &Dataset, cfg: &SaaConfig) -> Result<SaaReport, SaaError> {
    cfg.validate(ds.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| SaaError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let gt_seed = replica_seed(cfg.seed_base, usize::MAX >> 32, 0);
        let eval_seed = replica_seed(cfg.seed_base, usize::MAX >> 32, 1);
        let gt_set = full_data_set(case, ds, cfg.ground_truth_n, gt_seed, cfg.kmeans)?;
        let eval = full_data_set(case, ds, cfg.eval_n, eval_seed, cfg.kmeans)?;
        let (ground_truth_value, ground_truth_plan) =
            solve_two_stage(case, &gt_set, cfg).map_err(|e| SaaError::GroundTruth(Box::new(e)))?;
        log::info!("ground truth {ground_truth_value:.6} with plan {:?}", ground_truth_plan.key());

        let cache = UbCache { case, eval: &eval, cfg, values: Mutex::new(HashMap::new()) };
        let tasks: Vec<(usize, usize)> =
            cfg.n_values.iter().flat_map(|&n| (0..cfg.replications).map(move |r| (n, r))).collect();
        let replicas: Vec<ReplicaResult> = tasks
            .par_iter()
            .map(|&(n, r)| {
                let res = run_replica(case, ds, cfg, &cache, n, r);
                match &res.error {
                    Some(e) => log::warn!("{e}"),
                    None => log::info!("n = {n}, replica {r}: lb {:.6}, ub {:.6}", res.lb.unwrap_or(f64::NAN), res.ub.unwrap_or(f64::NAN)),
                }
                res
            })
            .collect();

        let per_n = cfg
            .n_values
            .iter()
            .map(|&n| {
                let at: Vec<&ReplicaResult> = replicas.iter().filter(|r| r.n == n).collect();
                let ok: Vec<&ReplicaResult> = at.iter().copied().filter(|r| r.error.is_none()).collect();
                let col = |f: fn(&ReplicaResult) -> Option<f64>| Stats::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                SizeSummary {
                    n,
                    lb: col(|r| r.lb),
                    ub: col(|r| r.ub),
                    gap: col(|r| r.gap),
                    mean_lb_seconds: at.iter().map(|r| r.lb_seconds).sum::<f64>() / at.len() as f64,
                    failures: at.len() - ok.len(),
                }
            })
            .collect();
        Ok(SaaReport { config: cfg.clone(), ground_truth_value, ground_truth_plan, replicas, per_n })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    pub replica: usize,
    /// LB / ground truth.
    pub in_sample_ratio: f64,
    /// UB on the evaluation set / ground truth.
    pub out_sample_ratio: f64,
    /// Installed-kW share per technology; `None` for an all-zero plan.
    pub capacity_mix: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub n: usize,
    pub in_sample: Option<Stats>,
    pub out_sample: Option<Stats>,
    pub mean_mix: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub ground_truth_value: f64,
    pub rows: Vec<StabilityRow>,
    pub per_n: Vec<StabilitySummary>,
}

/// In- and out-of-sample ratios and capacity mixes of a finished SAA run.
pub fn stability_from(report: &SaaReport, case: &Case) -> StabilityReport {
    let gt = report.ground_truth_value;
    let rows: Vec<StabilityRow> = report
        .replicas
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| StabilityRow {
            n: r.n,
            replica: r.replica,
            in_sample_ratio: r.lb.expect("successful replica") / gt,
            out_sample_ratio: r.ub.expect("successful replica") / gt,
            capacity_mix: r.plan.as_ref().and_then(|p| p.capacity_shares(&case.catalog)),
        })
        .collect();
    let per_n = report
        .config
        .n_values
        .iter()
        .map(|&n| {
            let at: Vec<&StabilityRow> = rows.iter().filter(|r| r.n == n).collect();
            let mixes: Vec<[f64; 3]> = at.iter().filter_map(|r| r.capacity_mix).collect();
            let mean_mix = (!mixes.is_empty()).then(|| {
                let mut m = [0.0; 3];
                for mix in &mixes {
                    for (a, v) in m.iter_mut().zip(mix) {
                        *a += v / mixes.len() as f64;
                    }
                }
                m
            });
            StabilitySummary {
                n,
                in_sample: Stats::of(&at.iter().map(|r| r.in_sample_ratio).collect::<Vec<_>>()),
                out_sample: Stats::of(&at.iter().map(|r| r.out_sample_ratio).collect::<Vec<_>>()),
                mean_mix,
            }
        })
        .collect();
    StabilityReport { ground_truth_value: gt, rows, per_n }
}

/// `run_saa` followed by `stability_from`.
pub fn run_stability(case: &Case, ds: &Dataset, cfg: &SaaConfig) -> Result<(SaaReport, StabilityReport), SaaError> {
    let saa = run_saa(case, ds, cfg)?;
    let st = stability_from(&saa, case);
    Ok((saa, st))
}
