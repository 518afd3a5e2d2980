use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde_json::json;

use super::{SaaConfig, SaaError, SaaReport, Stats, StabilityReport};

/// Per-figure CSVs. All but `fig_time.csv` are reproducible bit for bit.
pub const FIGURE_FILES: [&str; 5] = ["fig_gap.csv", "fig_insample.csv", "fig_outsample.csv", "fig_mix.csv", "fig_time.csv"];

/// Stable hash of every setting that affects results; the thread count is
/// left out.
pub fn config_hash(cfg: &SaaConfig) -> u64 {
    let canon = format!(
        "{:?}|{}|{:?}|{:?}|{}|{}|{:?}|{:?}|{:?}",
        cfg.n_values,
        cfg.replications,
        cfg.ground_truth_n,
        cfg.eval_n,
        cfg.seed_base,
        cfg.de_max_scenarios,
        cfg.planner,
        (cfg.solve.mip_gap_target, cfg.solve.time_limit),
        cfg.kmeans
    );
    let mut h = FnvHasher::default();
    h.write(canon.as_bytes());
    h.finish()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stats_json(s: &Option<Stats>) -> serde_json::Value {
    match s {
        None => serde_json::Value::Null,
        Some(s) => json!({
            "count": s.count, "mean": s.mean, "std": s.std, "median": s.median,
            "min": s.min, "max": s.max, "ci95": s.ci95, "one_sided95": s.one_sided95,
        }),
    }
}

/// Writes the replica CSV and JSON summary (named after seed and config
/// hash) plus the figure CSVs into `dir`. Returns the paths written.
pub fn write_reports(dir: &Path, saa: &SaaReport, st: &StabilityReport) -> Result<Vec<PathBuf>, SaaError> {
    std::fs::create_dir_all(dir)?;
    let cfg = &saa.config;
    let stem = format!("saa_seed{}_{:016x}", cfg.seed_base, config_hash(cfg));
    let mut written = Vec::new();
    let mut csv_file = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), SaaError> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        written.push(path);
        Ok(())
    };

    let rows = saa
        .replicas
        .iter()
        .map(|r| {
            let modules = r.plan.as_ref().map(|p| p.key().iter().map(u32::to_string).collect::<Vec<_>>().join(";"));
            vec![
                r.n.to_string(),
                r.replica.to_string(),
                r.seed.to_string(),
                opt(r.lb),
                opt(r.ub),
                opt(r.gap),
                opt(r.plan.as_ref().map(|p| p.invest_cost)),
                modules.unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_file(
        &format!("{stem}.csv"),
        &["n", "replica", "seed", "lb", "ub", "gap", "invest_cost", "modules", "error"],
        rows,
    )?;

    let rows = saa
        .per_n
        .iter()
        .map(|s| {
            let f = |x: &Option<Stats>, g: fn(&Stats) -> Option<f64>| opt(x.as_ref().and_then(g));
            vec![
                s.n.to_string(),
                s.lb.map_or(0, |l| l.count).to_string(),
                f(&s.lb, |x| Some(x.mean)),
                f(&s.ub, |x| Some(x.mean)),
                f(&s.gap, |x| Some(x.mean)),
                f(&s.gap, |x| Some(x.median)),
                f(&s.lb, |x| x.ci95),
                f(&s.ub, |x| x.ci95),
                f(&s.gap, |x| x.ci95),
                saa.ground_truth_value.to_string(),
            ]
        })
        .collect();
    csv_file(
        "fig_gap.csv",
        &["n", "replicas", "mean_lb", "mean_ub", "mean_gap", "median_gap", "lb_ci95", "ub_ci95", "gap_ci95", "ground_truth"],
        rows,
    )?;

    let ratio_rows = |f: fn(&super::StabilityRow) -> f64| {
        st.rows.iter().map(|r| vec![r.n.to_string(), r.replica.to_string(), f(r).to_string()]).collect::<Vec<_>>()
    };
    csv_file("fig_insample.csv", &["n", "replica", "in_sample_ratio"], ratio_rows(|r| r.in_sample_ratio))?;
    csv_file("fig_outsample.csv", &["n", "replica", "out_sample_ratio"], ratio_rows(|r| r.out_sample_ratio))?;

    let rows = st
        .rows
        .iter()
        .map(|r| {
            let [pv, wt, cg] = r.capacity_mix.unwrap_or([0.0; 3]);
            vec![r.n.to_string(), r.replica.to_string(), pv.to_string(), wt.to_string(), cg.to_string(), r.capacity_mix.is_none().to_string()]
        })
        .collect();
    csv_file("fig_mix.csv", &["n", "replica", "pv_share", "wt_share", "cg_share", "zero_plan"], rows)?;

    let rows = saa.per_n.iter().map(|s| vec![s.n.to_string(), s.mean_lb_seconds.to_string()]).collect();
    csv_file("fig_time.csv", &["n", "mean_lb_seconds"], rows)?;

    let per_n: Vec<_> = saa
        .per_n
        .iter()
        .zip(&st.per_n)
        .map(|(s, t)| {
            json!({
                "n": s.n, "failures": s.failures,
                "lb": stats_json(&s.lb), "ub": stats_json(&s.ub), "gap": stats_json(&s.gap),
                "in_sample_ratio": stats_json(&t.in_sample), "out_sample_ratio": stats_json(&t.out_sample),
                "mean_capacity_mix": t.mean_mix,
            })
        })
        .collect();
    let summary = json!({
        "seed_base": cfg.seed_base,
        "config_hash": format!("{:016x}", config_hash(cfg)),
        "n_values": cfg.n_values,
        "replications": cfg.replications,
        "ground_truth_n": cfg.ground_truth_n,
        "eval_n": cfg.eval_n,
        "ground_truth_value": saa.ground_truth_value,
        "ground_truth_plan": saa.ground_truth_plan.to_json(),
        "failures": saa.failures(),
        "per_n": per_n,
    });
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("plain JSON") + "\n")?;
    written.push(path);
    Ok(written)
}
