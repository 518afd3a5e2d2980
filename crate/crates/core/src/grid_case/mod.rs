//! Grid, technology and economic data for a planning case.
//!
//! A case is loaded from a sectioned text file (see [`format`]) and validated
//! once; afterwards every type in here is immutable and can be shared freely
//! across worker threads.
//!
//! Physical inputs are kept in the units they were written in (kW, kvar) so a
//! case serializes back bit-exactly. Per-unit values are derived on demand
//! through [`per_unitize`] and the accessor methods on [`Network`].

mod format;
mod topology;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{parse_case, serialize_case};
pub use topology::RadialView;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("unknown bundled case `{0}`")]
    UnknownBundled(String),
}

/// External bus label as written in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Installable distributed-generation technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tech {
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "WT")]
    Wt,
    #[serde(rename = "CG")]
    Cg,
}

impl Tech {
    pub const ALL: [Tech; 3] = [Tech::Pv, Tech::Wt, Tech::Cg];

    pub fn as_str(self) -> &'static str {
        match self {
            Tech::Pv => "PV",
            Tech::Wt => "WT",
            Tech::Cg => "CG",
        }
    }
}

impl fmt::Display for Tech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tech {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PV" => Ok(Tech::Pv),
            "WT" => Ok(Tech::Wt),
            "CG" => Ok(Tech::Cg),
            other => Err(format!("unknown technology `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub r_pu: f64,
    pub x_pu: f64,
    pub i_max_pu: f64,
}

impl Line {
    /// |Z|² = R² + X², in p.u.²
    pub fn z2(&self) -> f64 {
        self.r_pu * self.r_pu + self.x_pu * self.x_pu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// A bus where DG may be installed (β = 1 for the listed technologies).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub dg_max_kw: f64,
    pub techs: Vec<Tech>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub s_base_kva: f64,
    pub substation: BusId,
    pub v_min: f64,
    pub v_max: f64,
    /// Import limits at the substation, p.u.
    pub substation_p_max: f64,
    pub substation_q_max: f64,
    pub buses: Vec<BusId>,
    pub lines: Vec<Line>,
    pub loads: BTreeMap<BusId, Load>,
    pub candidates: BTreeMap<BusId, Candidate>,
}

impl Network {
    pub fn bus_position(&self, bus: BusId) -> Option<usize> {
        self.buses.binary_search(&bus).ok()
    }

    /// Nominal active demand at `bus`, p.u.
    pub fn demand_p(&self, bus: BusId) -> f64 {
        self.loads.get(&bus).map_or(0.0, |l| l.p_kw / self.s_base_kva)
    }

    /// Nominal reactive demand at `bus`, p.u.
    pub fn demand_q(&self, bus: BusId) -> f64 {
        self.loads.get(&bus).map_or(0.0, |l| l.q_kvar / self.s_base_kva)
    }

    pub fn dg_max_pu(&self, bus: BusId) -> f64 {
        self.candidates
            .get(&bus)
            .map_or(0.0, |c| c.dg_max_kw / self.s_base_kva)
    }

    /// β^tech_n
    pub fn is_candidate(&self, bus: BusId, tech: Tech) -> bool {
        self.candidates
            .get(&bus)
            .is_some_and(|c| c.techs.contains(&tech))
    }

    /// Candidate (bus, tech) pairs in canonical order.
    pub fn candidate_pairs(&self) -> Vec<(BusId, Tech)> {
        self.candidates
            .iter()
            .flat_map(|(bus, c)| {
                Tech::ALL
                    .into_iter()
                    .filter(|t| c.techs.contains(t))
                    .map(move |t| (*bus, t))
            })
            .collect()
    }

    pub fn total_demand_kw(&self) -> f64 {
        self.loads.values().map(|l| l.p_kw).sum()
    }

    pub fn total_demand_kvar(&self) -> f64 {
        self.loads.values().map(|l| l.q_kvar).sum()
    }

    /// Aggregate power factor P / |S| of the nominal demand.
    pub fn average_power_factor(&self) -> f64 {
        let p = self.total_demand_kw();
        let q = self.total_demand_kvar();
        let s = p.hypot(q);
        if s == 0.0 {
            1.0
        } else {
            p / s
        }
    }

    pub fn radial(&self) -> RadialView {
        RadialView::new(self)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let fail = |msg: String| Err(CaseError::Validation(msg));
        if !(self.s_base_kva > 0.0) {
            return fail(format!("s_base_kva must be positive, got {}", self.s_base_kva));
        }
        if !(self.v_min > 0.0) {
            return fail(format!("v_min must be positive, got {}", self.v_min));
        }
        if !(self.v_min < self.v_max) {
            return fail(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            ));
        }
        if self.v_min > 1.0 || self.v_max < 1.0 {
            return fail(format!(
                "voltage band [{}, {}] excludes the 1.0 p.u. substation voltage",
                self.v_min, self.v_max
            ));
        }
        if !(self.substation_p_max >= 0.0) || !(self.substation_q_max >= 0.0) {
            return fail("substation import limits must be non-negative".into());
        }
        if self.bus_position(self.substation).is_none() {
            return fail(format!("substation bus {} is not a bus of the network", self.substation));
        }
        for w in self.buses.windows(2) {
            if w[0] >= w[1] {
                return fail("bus list must be sorted and free of duplicates".into());
            }
        }
        for (k, line) in self.lines.iter().enumerate() {
            if self.bus_position(line.from).is_none() || self.bus_position(line.to).is_none() {
                return fail(format!("line {k} ({}-{}) references an unknown bus", line.from, line.to));
            }
            if !(line.r_pu >= 0.0) || !(line.x_pu >= 0.0) {
                return fail(format!("line {}-{} has negative impedance", line.from, line.to));
            }
            if !(line.i_max_pu > 0.0) || !line.i_max_pu.is_finite() {
                return fail(format!("line {}-{} needs a positive finite i_max_pu", line.from, line.to));
            }
        }
        topology::check_radial(self)?;
        for (bus, load) in &self.loads {
            if self.bus_position(*bus).is_none() {
                return fail(format!("demand at unknown bus {bus}"));
            }
            if !(load.p_kw >= 0.0) || !(load.q_kvar >= 0.0) {
                return fail(format!("demand at bus {bus} must be non-negative"));
            }
        }
        for (bus, cand) in &self.candidates {
            if self.bus_position(*bus).is_none() {
                return fail(format!("candidate entry for unknown bus {bus}"));
            }
            if !(cand.dg_max_kw >= 0.0) || !cand.dg_max_kw.is_finite() {
                return fail(format!("dg_max at bus {bus} must be non-negative and finite"));
            }
        }
        Ok(())
    }
}

/// Cost and electrical data of one technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechParams {
    /// kW per integer module
    pub module_kw: f64,
    /// $ per module over the horizon
    pub inv_cost: f64,
    /// $ per kWh produced
    pub om_cost: f64,
    pub pf_lead: f64,
    pub pf_lag: f64,
}

impl TechParams {
    /// (λ⁺, λ⁻) such that λ⁺·p ≤ q ≤ λ⁻·p.
    pub fn reactive_band(&self) -> (f64, f64) {
        (-self.pf_lead.acos().tan(), self.pf_lag.acos().tan())
    }
}

/// PV cell-temperature production model. Irradiances are in W/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvModel {
    pub y_rated_kw: f64,
    pub g_stc: f64,
    pub g_noct: f64,
    pub t_c_stc: f64,
    pub t_c_noct: f64,
    pub t_a_noct: f64,
    /// fraction per °C
    pub alpha: f64,
}

/// Piecewise-linear wind power curve, speeds in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtModel {
    pub y_rated_kw: f64,
    pub v_in: f64,
    pub v_rated: f64,
    pub v_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyCatalog {
    pub pv: TechParams,
    pub wt: TechParams,
    pub cg: TechParams,
    pub pv_model: PvModel,
    pub wt_model: WtModel,
}

impl TechnologyCatalog {
    pub fn get(&self, tech: Tech) -> &TechParams {
        match tech {
            Tech::Pv => &self.pv,
            Tech::Wt => &self.wt,
            Tech::Cg => &self.cg,
        }
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        for tech in Tech::ALL {
            let t = self.get(tech);
            if !(t.module_kw > 0.0) {
                return Err(CaseError::Validation(format!("{tech}: module_kw must be positive")));
            }
            if !(t.inv_cost >= 0.0) || !(t.om_cost >= 0.0) {
                return Err(CaseError::Validation(format!("{tech}: costs must be non-negative")));
            }
            for pf in [t.pf_lead, t.pf_lag] {
                if !(pf > 0.0 && pf <= 1.0) {
                    return Err(CaseError::Validation(format!(
                        "{tech}: power factor {pf} outside (0, 1]"
                    )));
                }
            }
        }
        let pv = &self.pv_model;
        if !(pv.g_stc > 0.0) || !(pv.g_noct > 0.0) {
            return Err(CaseError::Validation("PV g_stc and g_noct must be positive".into()));
        }
        let wt = &self.wt_model;
        if !(wt.v_in < wt.v_rated && wt.v_rated < wt.v_out) || wt.v_in < 0.0 {
            return Err(CaseError::Validation(format!(
                "WT speeds must satisfy 0 <= v_in < v_rated < v_out, got {} / {} / {}",
                wt.v_in, wt.v_rated, wt.v_out
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    /// $ per kWh of losses
    pub loss_price: f64,
    /// $ per kWh imported at the substation
    pub import_price: f64,
    /// $ cap on investment; `None` means unlimited
    pub budget: Option<f64>,
    pub horizon_hours: f64,
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.loss_price >= 0.0) || !(self.import_price >= 0.0) {
            return Err(CaseError::Validation("prices must be non-negative".into()));
        }
        if let Some(b) = self.budget {
            if !(b >= 0.0) {
                return Err(CaseError::Validation("budget must be non-negative".into()));
            }
        }
        if !(self.horizon_hours > 0.0) || !self.horizon_hours.is_finite() {
            return Err(CaseError::Validation("horizon_hours must be positive".into()));
        }
        Ok(())
    }
}

/// A fully validated planning case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub network: Network,
    pub catalog: TechnologyCatalog,
    pub economics: EconomicParams,
}

impl Case {
    pub fn validate(&self) -> Result<(), CaseError> {
        self.network.validate()?;
        self.catalog.validate()?;
        self.economics.validate()
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<Case, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let case = parse_case(&text)?;
    case.validate()?;
    Ok(case)
}

const CASE34: &str = include_str!("../../cases/case34-reconstructed.case");
const CASE4: &str = include_str!("../../cases/case4.case");

/// Names of the cases shipped with the crate.
pub const BUNDLED_CASES: [&str; 2] = ["case34-reconstructed", "case4"];

pub fn bundled_case(name: &str) -> Result<Case, CaseError> {
    let text = match name {
        "case34" | "case34-reconstructed" => CASE34,
        "case4" => CASE4,
        other => return Err(CaseError::UnknownBundled(other.to_string())),
    };
    let case = parse_case(text)?;
    case.validate()?;
    Ok(case)
}

/// kW → p.u. on the system base.
pub fn per_unitize(raw_kw: f64, s_base_kva: f64) -> Result<f64, CaseError> {
    if !(s_base_kva > 0.0) {
        return Err(CaseError::Validation(format!(
            "per-unit base must be positive, got {s_base_kva}"
        )));
    }
    Ok(raw_kw / s_base_kva)
}

/// p.u. → kW on the system base.
pub fn from_per_unit(pu: f64, s_base_kva: f64) -> Result<f64, CaseError> {
    if !(s_base_kva > 0.0) {
        return Err(CaseError::Validation(format!(
            "per-unit base must be positive, got {s_base_kva}"
        )));
    }
    Ok(pu * s_base_kva)
}
