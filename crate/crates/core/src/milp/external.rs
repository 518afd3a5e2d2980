use std::collections::HashMap;
use std::fs;
use std::process::Command;
use std::time::Instant;

use super::{elapsed, export_mps, Backend, MilpProblem, MilpSolution, SolveOptions, SolveStatus, SolverError};

pub const SOLVER_CMD_ENV: &str = "DGPLAN_SOLVER_CMD";

/// Writes MPS, runs an external solver through `sh -c`, and reads back a
/// solution file.
///
/// The template substitutes `{mps}`, `{sol}`, `{gap}`, `{time}` and
/// `{threads}`. The solution file holds `<column> <value>` lines and an
/// optional `status <optimal|infeasible|unbounded|limit>` line; any other
/// line is ignored.
#[derive(Debug, Clone)]
pub struct FileExchangeBackend {
    pub command_template: String,
}

impl FileExchangeBackend {
    pub fn new(command_template: impl Into<String>) -> Self {
        Self { command_template: command_template.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(SOLVER_CMD_ENV).ok().filter(|s| !s.trim().is_empty()).map(Self::new)
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn parse_status(word: &str) -> Option<SolveStatus> {
    match word.to_ascii_lowercase().as_str() {
        "optimal" => Some(SolveStatus::Optimal),
        "infeasible" => Some(SolveStatus::Infeasible),
        "unbounded" => Some(SolveStatus::Unbounded),
        "limit" | "limit-reached" | "time_limit" => Some(SolveStatus::LimitReached),
        _ => None,
    }
}

impl Backend for FileExchangeBackend {
    fn name(&self) -> &str {
        "file-exchange"
    }

    fn solve(&self, problem: &MilpProblem, opts: &SolveOptions) -> Result<MilpSolution, SolverError> {
        let start = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| SolverError::Io { path: "<tempdir>".into(), message: e.to_string() })?;
        let mps = dir.path().join("model.mps");
        let sol = dir.path().join("model.sol");
        let names = export_mps(problem, &mps)?;
        let cmd = self
            .command_template
            .replace("{mps}", &quote(&mps.display().to_string()))
            .replace("{sol}", &quote(&sol.display().to_string()))
            .replace("{gap}", &opts.mip_gap_target.to_string())
            .replace("{time}", &opts.time_limit.to_string())
            .replace("{threads}", &opts.threads.to_string());
        let out = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .output()
            .map_err(|e| SolverError::Unavailable(format!("cannot run `{cmd}`: {e}")))?;
        if !out.status.success() {
            return Err(SolverError::Backend(format!(
                "`{cmd}` exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = fs::read_to_string(&sol).map_err(|e| SolverError::Io { path: sol.display().to_string(), message: e.to_string() })?;

        let index: HashMap<&str, usize> = names.columns.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
        let mut values: Vec<Option<f64>> = vec![None; problem.variables.len()];
        let mut status = None;
        for line in text.lines() {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 2 {
                continue;
            }
            if t[0].eq_ignore_ascii_case("status") {
                status = parse_status(t[1]);
                continue;
            }
            if let (Some(&j), Ok(v)) = (index.get(t[0]), t[1].parse::<f64>()) {
                values[j] = Some(v);
            }
        }
        let wall = elapsed(start);
        let status = status.unwrap_or(SolveStatus::Optimal);
        if matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            return Ok(MilpSolution::without_values(status, wall));
        }
        let mut full = Vec::with_capacity(values.len());
        for (j, v) in values.into_iter().enumerate() {
            match v {
                Some(v) => full.push(v),
                None => {
                    return Err(SolverError::Backend(format!("solution file has no value for `{}`", names.columns[j])))
                }
            }
        }
        let objective = problem.objective_value(&full);
        Ok(MilpSolution {
            status,
            objective_value: Some(objective),
            values: Some(full),
            reduced_costs: None,
            solve_wall_time: wall,
            mip_gap: None,
            dual_bound: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Sense, VarType};
    use super::*;

    fn one() -> MilpProblem {
        let mut p = MilpProblem::new("one");
        let x = p.add_var("x", 0.0, f64::INFINITY, VarType::Integer);
        p.add_constraint("c", vec![(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective_term(x, 1.0);
        p
    }

    #[test]
    fn parses_values_and_status() {
        let b = FileExchangeBackend::new("test -s {mps} && printf 'Header line\\nstatus optimal\\nx 3\\nc 3\\n' > {sol}");
        let s = b.solve(&one(), &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.values, Some(vec![3.0]));
        assert_eq!(s.objective_value, Some(3.0));
    }

    #[test]
    fn infeasible_status_has_no_values() {
        let b = FileExchangeBackend::new("echo 'status infeasible' > {sol}");
        let s = b.solve(&one(), &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.values.is_none());
    }

    #[test]
    fn failures_are_reported() {
        let b = FileExchangeBackend::new("exit 3");
        assert!(matches!(b.solve(&one(), &SolveOptions::default()), Err(SolverError::Backend(_))));
        let b = FileExchangeBackend::new("echo 'y 1' > {sol}");
        let err = b.solve(&one(), &SolveOptions::default()).unwrap_err().to_string();
        assert!(err.contains("`x`"), "{err}");
    }
}
