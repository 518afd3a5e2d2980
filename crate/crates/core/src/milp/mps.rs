use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{MilpProblem, Sense, SolverError, VarType};

/// Longest name written to the MPS file.
pub const MAX_NAME: usize = 31;
pub const OBJECTIVE_ROW: &str = "obj";

/// MPS-side names, index-aligned with the problem's variables and constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpsNames {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
}

impl MpsNames {
    pub fn new(p: &MilpProblem) -> Self {
        let mut used = HashSet::new();
        let columns = p.variables.iter().map(|v| unique(&v.name, &mut used)).collect();
        let mut used = HashSet::from([OBJECTIVE_ROW.to_string()]);
        let rows = p.constraints.iter().map(|c| unique(&c.name, &mut used)).collect();
        Self { columns, rows }
    }

    /// Path of the name-map file written next to `mps_path`.
    pub fn sidecar_path(mps_path: &Path) -> PathBuf {
        let mut s = mps_path.as_os_str().to_owned();
        s.push(".names");
        PathBuf::from(s)
    }

    fn sidecar(&self, p: &MilpProblem) -> String {
        let mut out = String::new();
        for (m, v) in self.columns.iter().zip(&p.variables) {
            let _ = writeln!(out, "C {m} {}", v.name);
        }
        for (m, c) in self.rows.iter().zip(&p.constraints) {
            let _ = writeln!(out, "R {m} {}", c.name);
        }
        out
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '[' | ']') { c } else { '_' })
        .take(MAX_NAME)
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Sanitized, truncated, and suffixed with `_<n>` on collision.
fn unique(name: &str, used: &mut HashSet<String>) -> String {
    let base = sanitize(name);
    if used.insert(base.clone()) {
        return base;
    }
    let mut n = 1usize;
    loop {
        let suffix = format!("_{n}");
        let keep = MAX_NAME.saturating_sub(suffix.len()).min(base.len());
        let candidate = format!("{}{suffix}", &base[..keep]);
        if used.insert(candidate.clone()) {
            return candidate;
        }
        n += 1;
    }
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// Writes `p` as free-format MPS and the name map to `<path>.names`.
pub fn export_mps(p: &MilpProblem, path: impl AsRef<Path>) -> Result<MpsNames, SolverError> {
    p.validate()?;
    let path = path.as_ref();
    let names = MpsNames::new(p);
    let text = render(p, &names);
    let io = |path: &Path, e: std::io::Error| SolverError::Io { path: path.display().to_string(), message: e.to_string() };
    fs::write(path, text).map_err(|e| io(path, e))?;
    let side = MpsNames::sidecar_path(path);
    fs::write(&side, names.sidecar(p)).map_err(|e| io(&side, e))?;
    Ok(names)
}

pub(crate) fn render(p: &MilpProblem, names: &MpsNames) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", sanitize(if p.name.is_empty() { "problem" } else { &p.name }));
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {OBJECTIVE_ROW}");
    for (c, n) in p.constraints.iter().zip(&names.rows) {
        let tag = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {tag} {n}");
    }

    // column-major view with repeated row entries merged
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.variables.len()];
    for (i, c) in p.constraints.iter().enumerate() {
        for &(j, a) in &c.terms {
            match by_col[j].last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => by_col[j].push((i, a)),
            }
        }
    }
    let cost = p.cost_vector();

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, v) in p.variables.iter().enumerate() {
        let is_int = v.var_type == VarType::Integer;
        if is_int != in_int {
            let tag = if is_int { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " MARKER 'MARKER' '{tag}'");
            in_int = is_int;
        }
        let col = &names.columns[j];
        let mut wrote = false;
        if cost[j] != 0.0 {
            let _ = writeln!(out, " {col} {OBJECTIVE_ROW} {}", num(cost[j]));
            wrote = true;
        }
        for &(i, a) in &by_col[j] {
            if a != 0.0 {
                let _ = writeln!(out, " {col} {} {}", names.rows[i], num(a));
                wrote = true;
            }
        }
        if !wrote {
            // declare the column even when it appears nowhere
            let _ = writeln!(out, " {col} {OBJECTIVE_ROW} 0");
        }
    }
    if in_int {
        out.push_str(" MARKER 'MARKER' 'INTEND'\n");
    }

    out.push_str("RHS\n");
    if p.objective.constant != 0.0 {
        // readers take the objective offset as minus this entry
        let _ = writeln!(out, " RHS {OBJECTIVE_ROW} {}", num(-p.objective.constant));
    }
    for (c, n) in p.constraints.iter().zip(&names.rows) {
        if c.rhs != 0.0 {
            let _ = writeln!(out, " RHS {n} {}", num(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for (v, col) in p.variables.iter().zip(&names.columns) {
        let (lo, up) = (v.lower, v.upper);
        let is_int = v.var_type == VarType::Integer;
        if lo == up {
            let _ = writeln!(out, " FX BND {col} {}", num(lo));
            continue;
        }
        if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            let _ = writeln!(out, " FR BND {col}");
            continue;
        }
        if lo == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND {col}");
        } else if lo != 0.0 || is_int {
            let _ = writeln!(out, " LO BND {col} {}", num(lo));
        }
        if up.is_finite() {
            let _ = writeln!(out, " UP BND {col} {}", num(up));
        } else if is_int {
            // some readers default unbounded integer columns to binary
            let _ = writeln!(out, " PL BND {col}");
        }
    }
    out.push_str("RANGES\n");
    out.push_str("ENDATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{read_mps_with_highs, HighsBackend, Backend, SolveOptions};
    use super::*;
    use std::collections::HashMap;

    /// Minimal reader kept separate from the writer: rows, columns, rhs and
    /// bounds keyed by MPS name.
    #[derive(Debug, Default)]
    struct Parsed {
        rows: HashMap<String, char>,
        coefs: HashMap<(String, String), f64>,
        rhs: HashMap<String, f64>,
        integer: HashSet<String>,
        lower: HashMap<String, f64>,
        upper: HashMap<String, f64>,
        columns: Vec<String>,
        sections: Vec<String>,
    }

    fn parse(text: &str) -> Parsed {
        let mut p = Parsed::default();
        let mut section = String::new();
        let mut int_mode = false;
        for line in text.lines() {
            if !line.starts_with(' ') {
                section = line.split_whitespace().next().unwrap().to_string();
                p.sections.push(section.clone());
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            match section.as_str() {
                "ROWS" => {
                    p.rows.insert(t[1].into(), t[0].chars().next().unwrap());
                }
                "COLUMNS" => {
                    if t[1] == "'MARKER'" {
                        int_mode = t[2] == "'INTORG'";
                        continue;
                    }
                    if !p.columns.contains(&t[0].to_string()) {
                        p.columns.push(t[0].into());
                        p.lower.insert(t[0].into(), 0.0);
                        p.upper.insert(t[0].into(), f64::INFINITY);
                    }
                    if int_mode {
                        p.integer.insert(t[0].into());
                    }
                    p.coefs.insert((t[0].into(), t[1].into()), t[2].parse().unwrap());
                }
                "RHS" => {
                    p.rhs.insert(t[1].into(), t[2].parse().unwrap());
                }
                "BOUNDS" => {
                    let c = t[2].to_string();
                    match t[0] {
                        "FX" => {
                            let v = t[3].parse().unwrap();
                            p.lower.insert(c.clone(), v);
                            p.upper.insert(c, v);
                        }
                        "FR" => {
                            p.lower.insert(c.clone(), f64::NEG_INFINITY);
                            p.upper.insert(c, f64::INFINITY);
                        }
                        "MI" => {
                            p.lower.insert(c, f64::NEG_INFINITY);
                        }
                        "PL" => {
                            p.upper.insert(c, f64::INFINITY);
                        }
                        "LO" => {
                            p.lower.insert(c, t[3].parse().unwrap());
                        }
                        "UP" => {
                            p.upper.insert(c, t[3].parse().unwrap());
                        }
                        other => panic!("unexpected bound {other}"),
                    }
                }
                _ => panic!("data in section {section}"),
            }
        }
        p
    }

    fn sample() -> MilpProblem {
        let mut p = MilpProblem::new("sample");
        let x = p.add_var("x", 0.0, f64::INFINITY, VarType::Integer);
        let y = p.add_var("y with space", -2.0, 5.5, VarType::Continuous);
        let z = p.add_var("z", f64::NEG_INFINITY, f64::INFINITY, VarType::Continuous);
        let w = p.add_var("w", 1.0, 1.0, VarType::Continuous);
        p.add_constraint("c1", vec![(x, 1.0), (y, 2.0)], Sense::Ge, 3.0);
        p.add_constraint("c2", vec![(y, 1.0), (z, -1.0)], Sense::Eq, 0.25);
        p.add_constraint("c3", vec![(z, 1.0), (w, 1.0)], Sense::Le, 4.0);
        p.add_objective_term(x, 1.0);
        p.add_objective_term(y, 0.5);
        p.add_objective_term(z, 0.125);
        p.objective.constant = 10.0;
        p
    }

    #[test]
    fn one_variable_problem_round_trips() {
        let mut p = MilpProblem::new("one");
        let x = p.add_var("x", 0.0, f64::INFINITY, VarType::Integer);
        p.add_constraint("c", vec![(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective_term(x, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.mps");
        export_mps(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = parse(&text);
        assert_eq!(parsed.sections, ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES", "ENDATA"]);
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows["c"], 'G');
        assert_eq!(parsed.columns, ["x"]);
        assert!(parsed.integer.contains("x"));
        assert_eq!(parsed.coefs[&("x".to_string(), "c".to_string())], 1.0);
        assert_eq!(parsed.rhs["c"], 3.0);
        assert_eq!((parsed.lower["x"], parsed.upper["x"]), (0.0, f64::INFINITY));

        let h = read_mps_with_highs(&path, &SolveOptions::default()).unwrap();
        assert_eq!(h.col_names, ["x"]);
        assert_eq!(h.row_lower, [3.0]);
        assert_eq!(h.integer, [true]);
        assert_eq!(h.optimum, Some(3.0));
    }

    #[test]
    fn mixed_problem_matches_under_both_readers() {
        let p = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mps");
        let names = export_mps(&p, &path).unwrap();
        assert_eq!(names.columns[1], "y_with_space");
        let parsed = parse(&std::fs::read_to_string(&path).unwrap());
        assert_eq!(parsed.rhs[OBJECTIVE_ROW], -10.0);
        assert_eq!((parsed.lower["y_with_space"], parsed.upper["y_with_space"]), (-2.0, 5.5));
        assert_eq!(parsed.lower["z"], f64::NEG_INFINITY);
        assert_eq!((parsed.lower["w"], parsed.upper["w"]), (1.0, 1.0));
        assert_eq!(parsed.integer.len(), 1);
        for (i, c) in p.constraints.iter().enumerate() {
            for &(j, a) in &c.terms {
                assert_eq!(parsed.coefs[&(names.columns[j].clone(), names.rows[i].clone())], a);
            }
        }

        let h = read_mps_with_highs(&path, &SolveOptions::default()).unwrap();
        assert_eq!(h.offset, 10.0);
        assert_eq!(h.col_lower, [0.0, -2.0, f64::NEG_INFINITY, 1.0]);
        assert_eq!(h.col_upper, [f64::INFINITY, 5.5, f64::INFINITY, 1.0]);
        assert_eq!(h.row_lower, [3.0, 0.25, f64::NEG_INFINITY]);
        assert_eq!(h.row_upper, [f64::INFINITY, 0.25, 4.0]);
        assert_eq!(h.num_nz, 6);
        let direct = HighsBackend.solve(&p, &SolveOptions::default()).unwrap();
        assert!((h.optimum.unwrap() - direct.objective_value.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn no_constraints_is_valid() {
        let mut p = MilpProblem::new("empty");
        let x = p.add_var("x", 1.0, 2.0, VarType::Continuous);
        p.add_objective_term(x, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.mps");
        export_mps(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = parse(&text);
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.rows[OBJECTIVE_ROW], 'N');
        let h = read_mps_with_highs(&path, &SolveOptions::default()).unwrap();
        assert_eq!(h.optimum, Some(1.0));
    }

    #[test]
    fn long_names_are_uniquified_bijectively() {
        let mut p = MilpProblem::new("long");
        let stem = "a_very_long_variable_name_prefix_that_keeps_going";
        for i in 0..12 {
            p.add_var(format!("{stem}_{i}"), 0.0, 1.0, VarType::Continuous);
        }
        p.add_var("a_very_long_variable_name_prefi_1", 0.0, 1.0, VarType::Continuous);
        let names = MpsNames::new(&p);
        let set: HashSet<_> = names.columns.iter().collect();
        assert_eq!(set.len(), names.columns.len());
        assert!(names.columns.iter().all(|n| n.len() <= MAX_NAME));
        assert_eq!(names, MpsNames::new(&p));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.mps");
        export_mps(&p, &path).unwrap();
        let side = std::fs::read_to_string(MpsNames::sidecar_path(&path)).unwrap();
        let map: HashMap<&str, &str> = side.lines().map(|l| {
            let t: Vec<&str> = l.split(' ').collect();
            (t[1], t[2])
        }).collect();
        assert_eq!(map.len(), 13);
        for (m, v) in names.columns.iter().zip(&p.variables) {
            assert_eq!(map[m.as_str()], v.name);
        }
    }

    #[test]
    fn row_named_like_objective_is_renamed() {
        let mut p = MilpProblem::new("t");
        let x = p.add_var("x", 0.0, 1.0, VarType::Continuous);
        p.add_constraint(OBJECTIVE_ROW, vec![(x, 1.0)], Sense::Le, 1.0);
        assert_eq!(MpsNames::new(&p).rows, ["obj_1"]);
    }
}
