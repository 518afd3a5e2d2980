//! Sectioned case-file format.
//!
//! ```text
//! # comment
//! [network]            key = value
//! [lines]              from to r_pu x_pu i_max_pu
//! [demand]             bus p_kw q_kvar
//! [candidates]         bus dg_max_kw PV,WT,CG
//! [technologies]       pv.module_kw = 100 ...
//! [economics]          loss_price = 0.1 ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `parse_case(&serialize_case(c)) == c` holds bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{
    BusId, Candidate, Case, CaseError, EconomicParams, Line, Load, Network, PvModel, Tech,
    TechParams, TechnologyCatalog, WtModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Network,
    Lines,
    Demand,
    Candidates,
    Technologies,
    Economics,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "network" => Section::Network,
            "lines" => Section::Lines,
            "demand" => Section::Demand,
            "candidates" => Section::Candidates,
            "technologies" => Section::Technologies,
            "economics" => Section::Economics,
            _ => return None,
        })
    }
}

fn perr(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Parse { line, message: message.into() }
}

/// Key/value pairs of one section, remembering where each key came from.
#[derive(Default)]
struct Table {
    entries: BTreeMap<String, (usize, String)>,
    section_line: usize,
}

impl Table {
    fn insert(&mut self, line: usize, key: &str, value: &str) -> Result<(), CaseError> {
        if self.entries.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(perr(line, format!("duplicate key `{key}`")));
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn string(&mut self, key: &str) -> Result<String, CaseError> {
        self.take(key)
            .map(|(_, v)| v)
            .ok_or_else(|| perr(self.section_line, format!("missing key `{key}`")))
    }

    fn f64(&mut self, key: &str) -> Result<f64, CaseError> {
        let line = self.section_line;
        let (l, v) = self.take(key).ok_or_else(|| perr(line, format!("missing key `{key}`")))?;
        parse_f64(l, key, &v)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, CaseError> {
        match self.take(key) {
            Some((l, v)) => parse_f64(l, key, &v),
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<(), CaseError> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(perr(line, format!("unknown key `{key}`")));
        }
        Ok(())
    }
}

fn parse_f64(line: usize, what: &str, s: &str) -> Result<f64, CaseError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| perr(line, format!("`{what}`: expected a number, got `{s}`")))?;
    if v.is_nan() {
        return Err(perr(line, format!("`{what}` is NaN")));
    }
    Ok(v)
}

fn parse_bus(line: usize, s: &str) -> Result<BusId, CaseError> {
    s.parse::<u32>()
        .map(BusId)
        .map_err(|_| perr(line, format!("expected a bus id, got `{s}`")))
}

fn row_fields(line: usize, text: &str, expected: usize) -> Result<Vec<&str>, CaseError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expected {
        return Err(perr(
            line,
            format!("expected {expected} columns, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

pub fn parse_case(text: &str) -> Result<Case, CaseError> {
    let mut section: Option<Section> = None;
    let mut seen = BTreeSet::new();
    let mut network_kv = Table::default();
    let mut tech_kv = Table::default();
    let mut econ_kv = Table::default();
    let mut lines = Vec::new();
    let mut loads = BTreeMap::new();
    let mut candidates = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let sec = Section::parse(name.trim())
                .ok_or_else(|| perr(lineno, format!("unknown section [{name}]")))?;
            if !seen.insert(name.trim().to_string()) {
                return Err(perr(lineno, format!("section [{name}] appears twice")));
            }
            match sec {
                Section::Network => network_kv.section_line = lineno,
                Section::Technologies => tech_kv.section_line = lineno,
                Section::Economics => econ_kv.section_line = lineno,
                _ => {}
            }
            section = Some(sec);
            continue;
        }
        let sec = section.ok_or_else(|| perr(lineno, "content before the first section"))?;
        match sec {
            Section::Network | Section::Technologies | Section::Economics => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| perr(lineno, "expected `key = value`"))?;
                let table = match sec {
                    Section::Network => &mut network_kv,
                    Section::Technologies => &mut tech_kv,
                    _ => &mut econ_kv,
                };
                table.insert(lineno, key.trim(), value.trim())?;
            }
            Section::Lines => {
                let f = row_fields(lineno, content, 5)?;
                lines.push(Line {
                    from: parse_bus(lineno, f[0])?,
                    to: parse_bus(lineno, f[1])?,
                    r_pu: parse_f64(lineno, "r_pu", f[2])?,
                    x_pu: parse_f64(lineno, "x_pu", f[3])?,
                    i_max_pu: parse_f64(lineno, "i_max_pu", f[4])?,
                });
            }
            Section::Demand => {
                let f = row_fields(lineno, content, 3)?;
                let bus = parse_bus(lineno, f[0])?;
                let load = Load {
                    p_kw: parse_f64(lineno, "p_kw", f[1])?,
                    q_kvar: parse_f64(lineno, "q_kvar", f[2])?,
                };
                if loads.insert(bus, load).is_some() {
                    return Err(perr(lineno, format!("duplicate demand row for bus {bus}")));
                }
            }
            Section::Candidates => {
                let f = row_fields(lineno, content, 3)?;
                let bus = parse_bus(lineno, f[0])?;
                let dg_max_kw = parse_f64(lineno, "dg_max_kw", f[1])?;
                let mut techs = Vec::new();
                for t in f[2].split(',').filter(|t| !t.is_empty()) {
                    let tech: Tech = t.parse().map_err(|e: String| perr(lineno, e))?;
                    if !techs.contains(&tech) {
                        techs.push(tech);
                    }
                }
                techs.sort();
                if candidates.insert(bus, Candidate { dg_max_kw, techs }).is_some() {
                    return Err(perr(lineno, format!("duplicate candidate row for bus {bus}")));
                }
            }
        }
    }

    for required in ["network", "lines", "technologies", "economics"] {
        if !seen.contains(required) {
            return Err(perr(text.lines().count().max(1), format!("missing section [{required}]")));
        }
    }

    let substation = {
        let line = network_kv.section_line;
        let s = network_kv.string("substation")?;
        parse_bus(line, &s)?
    };
    let mut buses: BTreeSet<BusId> = lines.iter().flat_map(|l: &Line| [l.from, l.to]).collect();
    buses.insert(substation);
    let network = Network {
        name: network_kv.string("name")?,
        s_base_kva: network_kv.f64("s_base_kva")?,
        substation,
        v_min: network_kv.f64("v_min")?,
        v_max: network_kv.f64("v_max")?,
        substation_p_max: network_kv.f64("substation_p_max")?,
        substation_q_max: network_kv.f64("substation_q_max")?,
        buses: buses.into_iter().collect(),
        lines,
        loads,
        candidates,
    };
    network_kv.finish()?;

    let mut tech = |prefix: &str, default_pf: f64| -> Result<TechParams, CaseError> {
        Ok(TechParams {
            module_kw: tech_kv.f64(&format!("{prefix}.module_kw"))?,
            inv_cost: tech_kv.f64(&format!("{prefix}.inv_cost"))?,
            om_cost: tech_kv.f64(&format!("{prefix}.om_cost"))?,
            pf_lead: tech_kv.f64_or(&format!("{prefix}.pf_lead"), default_pf)?,
            pf_lag: tech_kv.f64_or(&format!("{prefix}.pf_lag"), default_pf)?,
        })
    };
    let pv = tech("pv", 0.95)?;
    let wt = tech("wt", 0.95)?;
    let cg = tech("cg", 0.85)?;
    let pv_model = PvModel {
        y_rated_kw: tech_kv.f64("pv.y_rated_kw")?,
        g_stc: tech_kv.f64("pv.g_stc")?,
        g_noct: tech_kv.f64("pv.g_noct")?,
        t_c_stc: tech_kv.f64("pv.t_c_stc")?,
        t_c_noct: tech_kv.f64("pv.t_c_noct")?,
        t_a_noct: tech_kv.f64("pv.t_a_noct")?,
        alpha: tech_kv.f64("pv.alpha")?,
    };
    let wt_model = WtModel {
        y_rated_kw: tech_kv.f64("wt.y_rated_kw")?,
        v_in: tech_kv.f64("wt.v_in")?,
        v_rated: tech_kv.f64("wt.v_rated")?,
        v_out: tech_kv.f64("wt.v_out")?,
    };
    tech_kv.finish()?;

    let budget = match econ_kv.take("budget") {
        None => None,
        Some((_, v)) if v.eq_ignore_ascii_case("none") => None,
        Some((l, v)) => Some(parse_f64(l, "budget", &v)?),
    };
    let economics = EconomicParams {
        loss_price: econ_kv.f64("loss_price")?,
        import_price: econ_kv.f64("import_price")?,
        budget,
        horizon_hours: econ_kv.f64("horizon_hours")?,
    };
    econ_kv.finish()?;

    Ok(Case {
        network,
        catalog: TechnologyCatalog { pv, wt, cg, pv_model, wt_model },
        economics,
    })
}

pub fn serialize_case(case: &Case) -> String {
    let n = &case.network;
    let mut out = String::new();
    let _ = writeln!(out, "[network]");
    let _ = writeln!(out, "name = {}", n.name);
    let _ = writeln!(out, "s_base_kva = {}", n.s_base_kva);
    let _ = writeln!(out, "substation = {}", n.substation);
    let _ = writeln!(out, "v_min = {}", n.v_min);
    let _ = writeln!(out, "v_max = {}", n.v_max);
    let _ = writeln!(out, "substation_p_max = {}", n.substation_p_max);
    let _ = writeln!(out, "substation_q_max = {}", n.substation_q_max);
    let _ = writeln!(out, "\n[lines]\n# from to r_pu x_pu i_max_pu");
    for l in &n.lines {
        let _ = writeln!(out, "{} {} {} {} {}", l.from, l.to, l.r_pu, l.x_pu, l.i_max_pu);
    }
    let _ = writeln!(out, "\n[demand]\n# bus p_kw q_kvar");
    for (bus, load) in &n.loads {
        let _ = writeln!(out, "{bus} {} {}", load.p_kw, load.q_kvar);
    }
    let _ = writeln!(out, "\n[candidates]\n# bus dg_max_kw techs");
    for (bus, c) in &n.candidates {
        let techs: Vec<&str> = c.techs.iter().map(|t| t.as_str()).collect();
        let _ = writeln!(out, "{bus} {} {}", c.dg_max_kw, techs.join(","));
    }
    let _ = writeln!(out, "\n[technologies]");
    for tech in Tech::ALL {
        let t = case.catalog.get(tech);
        let p = tech.as_str().to_ascii_lowercase();
        let _ = writeln!(out, "{p}.module_kw = {}", t.module_kw);
        let _ = writeln!(out, "{p}.inv_cost = {}", t.inv_cost);
        let _ = writeln!(out, "{p}.om_cost = {}", t.om_cost);
        let _ = writeln!(out, "{p}.pf_lead = {}", t.pf_lead);
        let _ = writeln!(out, "{p}.pf_lag = {}", t.pf_lag);
    }
    let pv = &case.catalog.pv_model;
    let _ = writeln!(out, "pv.y_rated_kw = {}", pv.y_rated_kw);
    let _ = writeln!(out, "pv.g_stc = {}", pv.g_stc);
    let _ = writeln!(out, "pv.g_noct = {}", pv.g_noct);
    let _ = writeln!(out, "pv.t_c_stc = {}", pv.t_c_stc);
    let _ = writeln!(out, "pv.t_c_noct = {}", pv.t_c_noct);
    let _ = writeln!(out, "pv.t_a_noct = {}", pv.t_a_noct);
    let _ = writeln!(out, "pv.alpha = {}", pv.alpha);
    let wt = &case.catalog.wt_model;
    let _ = writeln!(out, "wt.y_rated_kw = {}", wt.y_rated_kw);
    let _ = writeln!(out, "wt.v_in = {}", wt.v_in);
    let _ = writeln!(out, "wt.v_rated = {}", wt.v_rated);
    let _ = writeln!(out, "wt.v_out = {}", wt.v_out);
    let e = &case.economics;
    let _ = writeln!(out, "\n[economics]");
    let _ = writeln!(out, "loss_price = {}", e.loss_price);
    let _ = writeln!(out, "import_price = {}", e.import_price);
    match e.budget {
        Some(b) => {
            let _ = writeln!(out, "budget = {b}");
        }
        None => {
            let _ = writeln!(out, "budget = none");
        }
    }
    let _ = writeln!(out, "horizon_hours = {}", e.horizon_hours);
    out
}

#[cfg(test)]
pub(super) const TEST_TAIL: &str = "\
[technologies]
pv.module_kw = 100
pv.inv_cost = 1000
pv.om_cost = 0.01
wt.module_kw = 100
wt.inv_cost = 1000
wt.om_cost = 0.01
cg.module_kw = 100
cg.inv_cost = 1000
cg.om_cost = 0.1
pv.y_rated_kw = 100
pv.g_stc = 1000
pv.g_noct = 800
pv.t_c_stc = 25
pv.t_c_noct = 45
pv.t_a_noct = 20
pv.alpha = 0.004
wt.y_rated_kw = 100
wt.v_in = 3
wt.v_rated = 12
wt.v_out = 25
[economics]
loss_price = 0.1
import_price = 0.1
horizon_hours = 8760
";
