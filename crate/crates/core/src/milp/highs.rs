use std::ffi::{c_void, CString};
use std::os::raw::c_char;
use std::path::Path;
use std::time::Instant;

use highs_sys::*;

use super::{
    edit_bounds, edit_coefficient, edit_objective, edit_rhs, elapsed, Backend, LpSession, MilpProblem, MilpSolution,
    Sense, SolveOptions, SolveStatus, SolverError, VarType,
};

/// Tighter than the HiGHS defaults so that unscaled rows meet
/// `FEASIBILITY_TOL` after postsolve.
const PRIMAL_FEAS_TOL: f64 = 1e-9;
const MIP_FEAS_TOL: f64 = 1e-9;

/// In-process HiGHS, one single-threaded instance per solve or session.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, problem: &MilpProblem, opts: &SolveOptions) -> Result<MilpSolution, SolverError> {
        problem.validate()?;
        let h = Handle::new(opts)?;
        h.pass(problem)?;
        h.run(problem)
    }

    fn session<'a>(&'a self, problem: &MilpProblem, opts: &SolveOptions) -> Result<Box<dyn LpSession + 'a>, SolverError> {
        problem.validate()?;
        let h = Handle::new(opts)?;
        h.pass(problem)?;
        Ok(Box::new(HighsSession { handle: h, problem: problem.clone() }))
    }
}

impl HighsBackend {
    /// As `solve`, seeded with values for some columns; HiGHS completes
    /// the rest by an LP and keeps the result as the first incumbent when
    /// it is feasible.
    pub fn solve_from(&self, problem: &MilpProblem, opts: &SolveOptions, start: &[(usize, f64)]) -> Result<MilpSolution, SolverError> {
        problem.validate()?;
        let h = Handle::new(opts)?;
        h.pass(problem)?;
        let index: Vec<HighsInt> = start.iter().map(|&(j, _)| j as HighsInt).collect();
        let value: Vec<f64> = start.iter().map(|&(_, v)| v).collect();
        check(
            unsafe { Highs_setSparseSolution(h.0, index.len() as HighsInt, index.as_ptr(), value.as_ptr()) },
            "the start solution",
        )?;
        h.run(problem)
    }
}

struct Handle(*mut c_void);

// The instance is only ever used from one thread at a time.
unsafe impl Send for Handle {}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.0) }
    }
}

fn cstr(s: &str) -> CString {
    CString::new(s).expect("option names have no NUL")
}

fn check(status: HighsInt, what: &str) -> Result<(), SolverError> {
    if status == STATUS_ERROR {
        Err(SolverError::Backend(format!("HiGHS rejected {what}")))
    } else {
        Ok(())
    }
}

impl Handle {
    fn new(opts: &SolveOptions) -> Result<Self, SolverError> {
        let ptr = unsafe { Highs_create() };
        if ptr.is_null() {
            return Err(SolverError::Unavailable("Highs_create returned null".into()));
        }
        let h = Handle(ptr);
        h.set_bool("output_flag", false)?;
        // a single worker keeps solves reproducible; parallelism lives above
        h.set_int("threads", 1)?;
        h.set_double("mip_rel_gap", opts.mip_gap_target)?;
        h.set_double("time_limit", opts.time_limit)?;
        h.set_double("primal_feasibility_tolerance", PRIMAL_FEAS_TOL)?;
        h.set_double("mip_feasibility_tolerance", MIP_FEAS_TOL)?;
        Ok(h)
    }

    fn set_bool(&self, name: &str, v: bool) -> Result<(), SolverError> {
        check(unsafe { Highs_setBoolOptionValue(self.0, cstr(name).as_ptr(), v as HighsInt) }, name)
    }

    fn set_int(&self, name: &str, v: HighsInt) -> Result<(), SolverError> {
        check(unsafe { Highs_setIntOptionValue(self.0, cstr(name).as_ptr(), v) }, name)
    }

    fn set_double(&self, name: &str, v: f64) -> Result<(), SolverError> {
        check(unsafe { Highs_setDoubleOptionValue(self.0, cstr(name).as_ptr(), v) }, name)
    }

    fn set_string(&self, name: &str, v: &str) -> Result<(), SolverError> {
        check(unsafe { Highs_setStringOptionValue(self.0, cstr(name).as_ptr(), cstr(v).as_ptr()) }, name)
    }

    fn pass(&self, p: &MilpProblem) -> Result<(), SolverError> {
        let ncol = p.variables.len();
        let nrow = p.constraints.len();
        let cost = p.cost_vector();
        let col_lower: Vec<f64> = p.variables.iter().map(|v| v.lower).collect();
        let col_upper: Vec<f64> = p.variables.iter().map(|v| v.upper).collect();
        let (mut row_lower, mut row_upper) = (Vec::with_capacity(nrow), Vec::with_capacity(nrow));
        let mut start: Vec<HighsInt> = Vec::with_capacity(nrow + 1);
        let mut index: Vec<HighsInt> = Vec::with_capacity(p.num_nonzeros());
        let mut value: Vec<f64> = Vec::with_capacity(p.num_nonzeros());
        for c in &p.constraints {
            let (lo, up) = row_bounds(c.sense, c.rhs);
            row_lower.push(lo);
            row_upper.push(up);
            start.push(index.len() as HighsInt);
            // HiGHS rejects repeated entries within a row
            let mut terms = c.terms.clone();
            terms.sort_by_key(|t| t.0);
            for (j, a) in terms {
                if index.last().copied() == Some(j as HighsInt) && start.last().copied() != Some(index.len() as HighsInt) {
                    *value.last_mut().expect("non-empty") += a;
                } else {
                    index.push(j as HighsInt);
                    value.push(a);
                }
            }
        }
        start.push(index.len() as HighsInt);
        let integrality: Vec<HighsInt> = p
            .variables
            .iter()
            .map(|v| if v.var_type == VarType::Integer { VAR_TYPE_INTEGER } else { VAR_TYPE_CONTINUOUS })
            .collect();
        let status = unsafe {
            Highs_passMip(
                self.0,
                ncol as HighsInt,
                nrow as HighsInt,
                index.len() as HighsInt,
                MATRIX_FORMAT_ROW_WISE,
                OBJECTIVE_SENSE_MINIMIZE,
                p.objective.constant,
                cost.as_ptr(),
                col_lower.as_ptr(),
                col_upper.as_ptr(),
                row_lower.as_ptr(),
                row_upper.as_ptr(),
                start.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
                integrality.as_ptr(),
            )
        };
        check(status, "the model")
    }

    fn model_status(&self) -> HighsInt {
        unsafe { Highs_getModelStatus(self.0) }
    }

    fn double_info(&self, name: &str) -> Option<f64> {
        let mut v = 0.0;
        let st = unsafe { Highs_getDoubleInfoValue(self.0, cstr(name).as_ptr(), &mut v) };
        (st == STATUS_OK).then_some(v)
    }

    fn int_info(&self, name: &str) -> Option<HighsInt> {
        let mut v: HighsInt = 0;
        let st = unsafe { Highs_getIntInfoValue(self.0, cstr(name).as_ptr(), &mut v) };
        (st == STATUS_OK).then_some(v)
    }

    fn run(&self, p: &MilpProblem) -> Result<MilpSolution, SolverError> {
        let start = Instant::now();
        let run_status = unsafe { Highs_run(self.0) };
        let mut model_status = self.model_status();
        if model_status == MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE {
            // presolve cannot tell the two apart; the simplex can
            self.set_string("presolve", "off")?;
            unsafe { Highs_run(self.0) };
            model_status = self.model_status();
            self.set_string("presolve", "choose")?;
        }
        let wall = elapsed(start);
        if run_status == STATUS_ERROR && model_status != MODEL_STATUS_INFEASIBLE {
            return Err(SolverError::Backend(format!("HiGHS run failed with model status {model_status}")));
        }
        let status = match model_status {
            MODEL_STATUS_OPTIMAL | MODEL_STATUS_MODEL_EMPTY => SolveStatus::Optimal,
            MODEL_STATUS_INFEASIBLE | MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => SolveStatus::Infeasible,
            MODEL_STATUS_UNBOUNDED => SolveStatus::Unbounded,
            MODEL_STATUS_REACHED_TIME_LIMIT
            | MODEL_STATUS_REACHED_ITERATION_LIMIT
            | MODEL_STATUS_REACHED_SOLUTION_LIMIT
            | MODEL_STATUS_REACHED_INTERRUPT
            | MODEL_STATUS_REACHED_MEMORY_LIMIT => SolveStatus::LimitReached,
            other => return Err(SolverError::Backend(format!("HiGHS finished with model status {other}"))),
        };
        let has_point = self.int_info("primal_solution_status") == Some(SOLUTION_STATUS_FEASIBLE);
        if !has_point || matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            return Ok(MilpSolution::without_values(status, wall));
        }
        let ncol = p.variables.len();
        let nrow = p.constraints.len();
        let mut col_value = vec![0.0; ncol];
        let mut col_dual = vec![0.0; ncol];
        let mut row_value = vec![0.0; nrow];
        let mut row_dual = vec![0.0; nrow];
        let st = unsafe {
            Highs_getSolution(self.0, col_value.as_mut_ptr(), col_dual.as_mut_ptr(), row_value.as_mut_ptr(), row_dual.as_mut_ptr())
        };
        check(st, "the solution query")?;
        let objective = unsafe { Highs_getObjectiveValue(self.0) };
        let is_mip = p.is_mip();
        let (mip_gap, dual_bound) = if is_mip {
            (self.double_info("mip_gap"), self.double_info("mip_dual_bound"))
        } else {
            (Some(0.0), Some(objective))
        };
        Ok(MilpSolution {
            status,
            objective_value: Some(objective),
            values: Some(col_value),
            reduced_costs: (!is_mip).then_some(col_dual),
            solve_wall_time: wall,
            mip_gap,
            dual_bound,
        })
    }
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

/// Keeps one HiGHS instance alive so that re-solves start from the last basis.
struct HighsSession {
    handle: Handle,
    problem: MilpProblem,
}

impl LpSession for HighsSession {
    fn problem(&self) -> &MilpProblem {
        &self.problem
    }

    fn set_var_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        edit_bounds(&mut self.problem, var, lower, upper);
        unsafe { Highs_changeColBounds(self.handle.0, var as HighsInt, lower, upper) };
    }

    fn set_rhs(&mut self, row: usize, rhs: f64) {
        edit_rhs(&mut self.problem, row, rhs);
        let (lo, up) = row_bounds(self.problem.constraints[row].sense, rhs);
        unsafe { Highs_changeRowBounds(self.handle.0, row as HighsInt, lo, up) };
    }

    fn set_coefficient(&mut self, row: usize, var: usize, value: f64) {
        edit_coefficient(&mut self.problem, row, var, value);
        unsafe { Highs_changeCoeff(self.handle.0, row as HighsInt, var as HighsInt, value) };
    }

    fn set_objective_coefficient(&mut self, var: usize, value: f64) {
        edit_objective(&mut self.problem, var, value);
        unsafe { Highs_changeColCost(self.handle.0, var as HighsInt, value) };
    }

    fn solve(&mut self) -> Result<MilpSolution, SolverError> {
        self.handle.run(&self.problem)
    }
}

/// Model data as HiGHS' own MPS reader sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsSummary {
    pub col_names: Vec<String>,
    pub col_cost: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub num_nz: usize,
    pub offset: f64,
    /// Optimal objective, when HiGHS can solve the model.
    pub optimum: Option<f64>,
    /// Column values at that optimum.
    pub solution: Option<Vec<f64>>,
}

/// Reads an MPS file with HiGHS (independently of the in-crate writer) and
/// solves it.
pub fn read_mps_with_highs(path: &Path, opts: &SolveOptions) -> Result<MpsSummary, SolverError> {
    let h = Handle::new(opts)?;
    let cpath = cstr(&path.display().to_string());
    check(unsafe { Highs_readModel(h.0, cpath.as_ptr()) }, "the MPS file")?;
    let ncol = unsafe { Highs_getNumCol(h.0) } as usize;
    let nrow = unsafe { Highs_getNumRow(h.0) } as usize;
    let nnz = unsafe { Highs_getNumNz(h.0) } as usize;
    let (mut nc, mut nr, mut nz, mut sense): (HighsInt, HighsInt, HighsInt, HighsInt) = (0, 0, 0, 0);
    let mut offset = 0.0;
    let mut col_cost = vec![0.0; ncol];
    let mut col_lower = vec![0.0; ncol];
    let mut col_upper = vec![0.0; ncol];
    let mut row_lower = vec![0.0; nrow];
    let mut row_upper = vec![0.0; nrow];
    let mut a_start: Vec<HighsInt> = vec![0; ncol + 1];
    let mut a_index: Vec<HighsInt> = vec![0; nnz.max(1)];
    let mut a_value = vec![0.0; nnz.max(1)];
    let mut integrality: Vec<HighsInt> = vec![0; ncol];
    let st = unsafe {
        Highs_getLp(
            h.0,
            MATRIX_FORMAT_COLUMN_WISE,
            &mut nc,
            &mut nr,
            &mut nz,
            &mut sense,
            &mut offset,
            col_cost.as_mut_ptr(),
            col_lower.as_mut_ptr(),
            col_upper.as_mut_ptr(),
            row_lower.as_mut_ptr(),
            row_upper.as_mut_ptr(),
            a_start.as_mut_ptr(),
            a_index.as_mut_ptr(),
            a_value.as_mut_ptr(),
            integrality.as_mut_ptr(),
        )
    };
    check(st, "the model query")?;
    let mut col_names = Vec::with_capacity(ncol);
    for j in 0..ncol {
        let mut buf = vec![0 as c_char; 1024];
        unsafe { Highs_getColName(h.0, j as HighsInt, buf.as_mut_ptr()) };
        let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
        col_names.push(String::from_utf8_lossy(&bytes).into_owned());
    }
    unsafe { Highs_run(h.0) };
    let (optimum, solution) = if h.model_status() == MODEL_STATUS_OPTIMAL {
        let mut cv = vec![0.0; ncol];
        let mut cd = vec![0.0; ncol];
        let mut rv = vec![0.0; nrow];
        let mut rd = vec![0.0; nrow];
        unsafe { Highs_getSolution(h.0, cv.as_mut_ptr(), cd.as_mut_ptr(), rv.as_mut_ptr(), rd.as_mut_ptr()) };
        (Some(unsafe { Highs_getObjectiveValue(h.0) }), Some(cv))
    } else {
        (None, None)
    };
    Ok(MpsSummary {
        col_names,
        col_cost,
        col_lower,
        col_upper,
        row_lower,
        row_upper,
        integer: integrality.iter().map(|&t| t == VAR_TYPE_INTEGER).collect(),
        num_nz: nnz,
        offset,
        optimum,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{check_solution, FEASIBILITY_TOL};
    use super::*;

    fn solve(p: &MilpProblem) -> MilpSolution {
        HighsBackend.solve(p, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn integer_lower_bound() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", 0.0, f64::INFINITY, VarType::Integer);
        p.add_constraint("c", vec![(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective_term(x, 1.0);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective_value.unwrap() - 3.0).abs() < 1e-9);
        assert!((s.values.as_ref().unwrap()[0] - 3.0).abs() < 1e-9);
        assert!(check_solution(&p, &s, FEASIBILITY_TOL).is_feasible());
    }

    #[test]
    fn negated_maximization_rounds_down() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", 0.0, f64::INFINITY, VarType::Integer);
        p.add_constraint("c", vec![(x, 1.0)], Sense::Le, 2.5);
        p.add_objective_term(x, -1.0);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.values.unwrap()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, VarType::Integer);
        p.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 1.0);
        p.add_constraint("hi", vec![(x, 1.0)], Sense::Le, 0.0);
        p.add_objective_term(x, 1.0);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.values.is_none());
    }

    #[test]
    fn unbounded_is_distinguished() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, VarType::Continuous);
        p.add_constraint("c", vec![(x, 1.0)], Sense::Le, 4.0);
        p.add_objective_term(x, 1.0);
        assert_eq!(solve(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn objective_constant_and_duplicate_terms() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", 0.0, 10.0, VarType::Continuous);
        p.add_constraint("c", vec![(x, 0.5), (x, 0.5)], Sense::Ge, 2.0);
        p.add_objective_term(x, 1.0);
        p.add_objective_term(x, 1.0);
        p.objective.constant = 7.0;
        let s = solve(&p);
        assert!((s.objective_value.unwrap() - 11.0).abs() < 1e-9);
    }

    #[test]
    fn warm_session_matches_cold_solves() {
        let mut p = MilpProblem::new("lp");
        let x = p.add_var("x", 0.0, 10.0, VarType::Continuous);
        let y = p.add_var("y", 0.0, 10.0, VarType::Continuous);
        let c = p.add_constraint("cover", vec![(x, 1.0), (y, 2.0)], Sense::Ge, 4.0);
        p.add_objective_term(x, 3.0);
        p.add_objective_term(y, 5.0);
        let mut s = HighsBackend.session(&p, &SolveOptions::default()).unwrap();
        for rhs in [4.0, 6.0, 1.0, 8.0] {
            s.set_rhs(c, rhs);
            let warm = s.solve().unwrap();
            let mut q = p.clone();
            q.constraints[c].rhs = rhs;
            let cold = solve(&q);
            assert!((warm.objective_value.unwrap() - cold.objective_value.unwrap()).abs() < 1e-9);
            // optimal: 2.5 per unit of cover through y
            assert!((warm.objective_value.unwrap() - 2.5 * rhs).abs() < 1e-9);
        }
        s.set_var_bounds(y, 0.0, 1.0);
        s.set_coefficient(c, x, 2.0);
        s.set_objective_coefficient(x, 1.0);
        let v = s.solve().unwrap();
        // x now covers at 0.5 per unit against 5 for y
        assert!((v.objective_value.unwrap() - 4.0).abs() < 1e-9, "{v:?}");
        assert_eq!(v.values.as_deref(), Some(&[4.0, 0.0][..]));
        assert!(check_solution(s.problem(), &v, FEASIBILITY_TOL).is_feasible());
    }

    #[test]
    fn reduced_cost_of_fixed_column_is_the_bound_sensitivity() {
        let mut p = MilpProblem::new("lp");
        let x = p.add_var("x", 2.0, 2.0, VarType::Continuous);
        let y = p.add_var("y", 0.0, f64::INFINITY, VarType::Continuous);
        p.add_constraint("cover", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 5.0);
        p.add_objective_term(y, 4.0);
        let s = solve(&p);
        assert!((s.objective_value.unwrap() - 12.0).abs() < 1e-9);
        assert!((s.reduced_costs.unwrap()[x] + 4.0).abs() < 1e-9);
    }
}
