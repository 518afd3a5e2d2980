//! Scenario generation: k-means over standardized hours, centroid to
//! operating point conversion, and the PV/WT production curves.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_case::{EconomicParams, PvModel, TechnologyCatalog, WtModel};
use crate::timeseries::{standardize_records, Dataset, HourlyRecord, IngestError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of rows ({rows})")]
    KTooLarge { k: usize, rows: usize },
    #[error("degenerate data: {distinct} distinct row(s) cannot form {k} clusters")]
    Degenerate { distinct: usize, k: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario file row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("invalid scenario set: {0}")]
    Invalid(String),
}

/// PV capacity factor from irradiance (W/m²) and ambient temperature (°C).
///
/// Cell temperature follows the NOCT model; the result is clamped to [0, 1].
pub fn pv_factor(ghi: f64, t_a: f64, p: &PvModel) -> f64 {
    let t_c = t_a + (ghi / p.g_noct) * (p.t_c_noct - p.t_a_noct);
    let raw = (ghi / p.g_stc) * (1.0 - p.alpha * (t_c - p.t_c_stc));
    raw.clamp(0.0, 1.0)
}

/// WT capacity factor: linear ramp from cut-in to rated, flat to cut-out, zero
/// at and beyond cut-out.
pub fn wt_factor(v: f64, p: &WtModel) -> f64 {
    if v < p.v_in || v >= p.v_out {
        0.0
    } else if v < p.v_rated {
        (v - p.v_in) / (p.v_rated - p.v_in)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    /// Independent k-means++ restarts; the lowest WCSS wins.
    pub n_init: usize,
    pub max_iter: usize,
    /// Largest centroid shift (standardized units) that counts as converged.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { n_init: 32, max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans(z: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult, ScenarioError> {
    kmeans_with(z, k, seed, KMeansOptions::default())
}

pub fn kmeans_with(z: ArrayView2<f64>, k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansResult, ScenarioError> {
    let rows = z.nrows();
    if k == 0 {
        return Err(ScenarioError::ZeroK);
    }
    if k > rows {
        return Err(ScenarioError::KTooLarge { k, rows });
    }
    let points: Vec<Vec<f64>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
    let distinct = count_distinct(&points);
    if distinct < k {
        return Err(ScenarioError::Degenerate { distinct, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..opts.n_init.max(1) {
        let init = plus_plus_seeds(&points, k, &mut rng);
        let run = lloyd(&points, init, &opts);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        // distinct rows >= k, so some point is still uncovered
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = i;
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, opts: &KMeansOptions) -> KMeansResult {
    let n = points.len();
    let dim = points[0].len();
    let k = centers.len();
    let mut assignment = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centers);
            assignment[i] = j;
            dist[i] = d;
        }
        repair_empty(&mut assignment, &mut dist, k);
        let next = means(points, &assignment, k, dim);
        let shift = centers.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centers = next;
        if shift < opts.tol {
            converged = true;
            break;
        }
    }
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&j| sizes[j] += 1);
    if hartigan(points, &mut assignment, &mut centers, &mut sizes, opts.max_iter) {
        centers = means(points, &assignment, k, dim);
    }
    let wcss = points.iter().zip(&assignment).map(|(p, &j)| sq_dist(p, &centers[j])).sum();
    let mut centroids = Array2::zeros((k, dim));
    for (j, c) in centers.iter().enumerate() {
        for (d, v) in c.iter().enumerate() {
            centroids[[j, d]] = *v;
        }
    }
    KMeansResult { centroids, assignment, sizes, wcss, iterations, converged }
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(assignment: &mut [usize], dist: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&j| sizes[j] += 1);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assignment.len() {
            if sizes[assignment[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("k <= rows leaves a donor cluster");
        sizes[assignment[i]] -= 1;
        assignment[i] = empty;
        dist[i] = 0.0;
        sizes[empty] = 1;
    }
}

/// Single-point moves that lower WCSS, from a Lloyd fixed point. A partition
/// stable under these moves is also stable under Lloyd's assignment step.
/// Returns whether anything moved.
fn hartigan(points: &[Vec<f64>], assignment: &mut [usize], centers: &mut [Vec<f64>], sizes: &mut [usize], max_sweeps: usize) -> bool {
    let mut moved = false;
    for _ in 0..max_sweeps {
        let mut any = false;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] == 1 {
                continue;
            }
            let na = sizes[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(p, &centers[a]);
            let mut best: Option<(usize, f64)> = None;
            for (b, c) in centers.iter().enumerate() {
                if b == a {
                    continue;
                }
                let nb = sizes[b] as f64;
                let add = nb / (nb + 1.0) * sq_dist(p, c);
                if best.is_none_or(|(_, v)| add < v) {
                    best = Some((b, add));
                }
            }
            let Some((b, add)) = best else { continue };
            // relative margin keeps rounding from cycling a point back and forth
            if add >= removal * (1.0 - 1e-12) {
                continue;
            }
            let nb = sizes[b] as f64;
            for (d, &v) in p.iter().enumerate() {
                centers[a][d] = (na * centers[a][d] - v) / (na - 1.0);
                centers[b][d] = (nb * centers[b][d] + v) / (nb + 1.0);
            }
            sizes[a] -= 1;
            sizes[b] += 1;
            assignment[i] = b;
            any = true;
        }
        if !any {
            break;
        }
        moved = true;
    }
    moved
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.iter().zip(assignment) {
        counts[j] += 1;
        for d in 0..dim {
            sums[j][d] += p[d];
        }
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

/// One operating point of the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub gamma_pv: f64,
    pub gamma_wt: f64,
    /// Conventional units are fully dispatchable; always 1.
    pub gamma_cg: f64,
    /// Demand relative to the dataset peak.
    pub gamma_d: f64,
    pub prob: f64,
    /// Expected hours of the horizon spent at this point.
    pub hours: f64,
    /// $/kWh
    pub import_price: f64,
}

pub const SCENARIO_CSV_HEADER: [&str; 7] = ["id", "prob", "hours", "gamma_pv", "gamma_wt", "gamma_d", "import_price"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    /// Number of hourly data points behind the set.
    pub source_hours: usize,
}

impl ScenarioSet {
    /// One scenario per hour, each with probability 1/N.
    pub fn empirical(records: &[HourlyRecord], demand_ref_kw: f64, cat: &TechnologyCatalog, econ: &EconomicParams) -> Self {
        let n = records.len();
        let scenarios = records
            .iter()
            .enumerate()
            .map(|(id, r)| operating_point(id, r.features(), 1, n, demand_ref_kw, cat, econ))
            .collect();
        Self { scenarios, source_hours: n }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn validate(&self, horizon_hours: f64) -> Result<(), ScenarioError> {
        if self.scenarios.is_empty() {
            return Err(ScenarioError::Invalid("no scenarios".into()));
        }
        for s in &self.scenarios {
            let ok = (0.0..=1.0).contains(&s.gamma_pv)
                && (0.0..=1.0).contains(&s.gamma_wt)
                && s.gamma_cg == 1.0
                && s.gamma_d >= 0.0
                && s.prob > 0.0
                && s.prob <= 1.0
                && s.hours > 0.0
                && s.import_price.is_finite()
                && s.import_price >= 0.0;
            if !ok {
                return Err(ScenarioError::Invalid(format!("scenario {} out of range: {s:?}", s.id)));
            }
        }
        let p: f64 = self.scenarios.iter().map(|s| s.prob).sum();
        if (p - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::Invalid(format!("probabilities sum to {p}")));
        }
        let h: f64 = self.scenarios.iter().map(|s| s.hours).sum();
        if (h - horizon_hours).abs() > 1e-6 * horizon_hours.max(1.0) {
            return Err(ScenarioError::Invalid(format!("hours sum to {h}, horizon is {horizon_hours}")));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        let io = |m: String| ScenarioError::Io { path: path.display().to_string(), message: m };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.to_string()))?;
        w.write_record(SCENARIO_CSV_HEADER).map_err(|e| io(e.to_string()))?;
        for s in &self.scenarios {
            w.write_record([
                s.id.to_string(),
                s.prob.to_string(),
                s.hours.to_string(),
                s.gamma_pv.to_string(),
                s.gamma_wt.to_string(),
                s.gamma_d.to_string(),
                s.import_price.to_string(),
            ])
            .map_err(|e| io(e.to_string()))?;
        }
        w.flush().map_err(|e| io(e.to_string()))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let io = |m: String| ScenarioError::Io { path: path.display().to_string(), message: m };
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io(e.to_string()))?;
        let headers = r.headers().map_err(|e| io(e.to_string()))?.clone();
        let mut cols = [0usize; 7];
        for (slot, name) in cols.iter_mut().zip(SCENARIO_CSV_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ScenarioError::Parse { row: 0, message: format!("missing column `{name}`") })?;
        }
        let mut scenarios = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| ScenarioError::Parse { row, message: e.to_string() })?;
            let num = |k: usize| -> Result<f64, ScenarioError> {
                let s = rec.get(cols[k]).unwrap_or("");
                s.parse().map_err(|_| ScenarioError::Parse {
                    row,
                    message: format!("column {}: cannot parse `{s}`", SCENARIO_CSV_HEADER[k]),
                })
            };
            let id_text = rec.get(cols[0]).unwrap_or("");
            let id = id_text
                .parse()
                .map_err(|_| ScenarioError::Parse { row, message: format!("column id: cannot parse `{id_text}`") })?;
            scenarios.push(Scenario {
                id,
                prob: num(1)?,
                hours: num(2)?,
                gamma_pv: num(3)?,
                gamma_wt: num(4)?,
                gamma_cg: 1.0,
                gamma_d: num(5)?,
                import_price: num(6)?,
            });
        }
        let source_hours = scenarios.len();
        Ok(Self { scenarios, source_hours })
    }
}

fn operating_point(
    id: usize,
    physical: [f64; 4],
    size: usize,
    total: usize,
    demand_ref_kw: f64,
    cat: &TechnologyCatalog,
    econ: &EconomicParams,
) -> Scenario {
    let [ghi, wind, temp, demand_kw] = physical;
    let prob = size as f64 / total as f64;
    Scenario {
        id,
        gamma_pv: pv_factor(ghi.max(0.0), temp, &cat.pv_model),
        gamma_wt: wt_factor(wind.max(0.0), &cat.wt_model),
        gamma_cg: 1.0,
        gamma_d: if demand_ref_kw > 0.0 { demand_kw.max(0.0) / demand_ref_kw } else { 0.0 },
        prob,
        hours: prob * econ.horizon_hours,
        import_price: econ.import_price,
    }
}

/// Clusters `ds` into `k` weighted scenarios. Demand factors are relative to
/// the dataset peak.
pub fn build_scenarios(
    ds: &Dataset,
    k: usize,
    seed: u64,
    cat: &TechnologyCatalog,
    econ: &EconomicParams,
) -> Result<ScenarioSet, ScenarioError> {
    Ok(cluster_records(ds.records(), ds.peak_demand_kw(), k, seed, cat, econ, KMeansOptions::default())?.0)
}

/// Clustering on an arbitrary multiset of hours (a bootstrap resample, for
/// instance). `demand_ref_kw` fixes the demand scale so that sets built from
/// different samples stay comparable.
pub fn cluster_records(
    records: &[HourlyRecord],
    demand_ref_kw: f64,
    k: usize,
    seed: u64,
    cat: &TechnologyCatalog,
    econ: &EconomicParams,
    opts: KMeansOptions,
) -> Result<(ScenarioSet, KMeansResult), ScenarioError> {
    let st = standardize_records(records)?;
    for w in &st.warnings {
        log::warn!("{w}");
    }
    let km = kmeans_with(st.z.view(), k, seed, opts)?;
    let n = records.len();
    let scenarios = (0..k)
        .map(|j| {
            let phys = st.unstandardize(km.centroids.row(j).as_slice().expect("standard layout"));
            operating_point(j, phys, km.sizes[j], n, demand_ref_kw, cat, econ)
        })
        .collect();
    Ok((ScenarioSet { scenarios, source_hours: n }, km))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_case::bundled_case;
    use crate::timeseries::{synth_dataset, ClimateProfile};
    use ndarray::array;
    use proptest::prelude::*;

    fn pv() -> PvModel {
        PvModel { y_rated_kw: 100.0, g_stc: 1000.0, g_noct: 800.0, t_c_stc: 25.0, t_c_noct: 45.0, t_a_noct: 20.0, alpha: 0.004 }
    }

    fn wt() -> WtModel {
        WtModel { y_rated_kw: 200.0, v_in: 3.0, v_rated: 12.0, v_out: 25.0 }
    }

    #[test]
    fn pv_points() {
        assert_eq!(pv_factor(0.0, 30.0, &pv()), 0.0);
        let flat = PvModel { alpha: 0.0, ..pv() };
        assert_eq!(pv_factor(1000.0, -10.0, &flat), 1.0);
        assert_eq!(pv_factor(1000.0, 45.0, &flat), 1.0);
        // T_c = 30 + 25 = 55, factor = 0.8 (1 - 0.004 * 30)
        assert!((pv_factor(800.0, 30.0, &pv()) - 0.704).abs() < 1e-12);
        // cold and bright exceeds 1 before clamping
        assert_eq!(pv_factor(1150.0, -20.0, &pv()), 1.0);
    }

    #[test]
    fn wt_points() {
        let p = wt();
        assert_eq!(wt_factor(12.0, &p), 1.0);
        assert!((wt_factor(7.5, &p) - 0.5).abs() < 1e-12);
        assert_eq!(wt_factor(25.0, &p), 0.0);
        assert_eq!(wt_factor(2.999, &p), 0.0);
        assert_eq!(wt_factor(3.0, &p), 0.0);
        assert_eq!(wt_factor(24.999, &p), 1.0);
    }

    proptest! {
        #[test]
        fn wt_continuous_below_cut_out(v in 0.0f64..24.9, dv in 0.0f64..1e-7) {
            let p = wt();
            let (a, b) = (wt_factor(v, &p), wt_factor(v + dv, &p));
            prop_assert!((a - b).abs() <= dv / 9.0 + 1e-15);
        }

        #[test]
        fn pv_continuous(g in 0.0f64..1200.0, t in -20.0f64..50.0, dg in 0.0f64..1e-6, dt in 0.0f64..1e-6) {
            let p = pv();
            let (a, b) = (pv_factor(g, t, &p), pv_factor(g + dg, t + dt, &p));
            prop_assert!((a - b).abs() < 1e-8);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn kmeans_identical_rows_single_cluster() {
        let z = array![[1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]];
        let r = kmeans(z.view(), 1, 0).unwrap();
        assert_eq!(r.sizes, vec![4]);
        assert_eq!(r.centroids.row(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(kmeans(z.view(), 2, 0), Err(ScenarioError::Degenerate { distinct: 1, k: 2 })));
        assert!(matches!(kmeans(z.view(), 5, 0), Err(ScenarioError::KTooLarge { k: 5, rows: 4 })));
        assert!(matches!(kmeans(z.view(), 0, 0), Err(ScenarioError::ZeroK)));
    }

    #[test]
    fn kmeans_separated_duplicates() {
        let mut z = Array2::zeros((8, 4));
        for i in 3..8 {
            z.row_mut(i).fill(1.0);
        }
        let r = kmeans(z.view(), 2, 42).unwrap();
        let mut pairs: Vec<(f64, usize)> = (0..2).map(|j| (r.centroids[[j, 0]], r.sizes[j])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(pairs, vec![(0.0, 3), (1.0, 5)]);
        assert_eq!(r.wcss, 0.0);
    }

    #[test]
    fn centroids_are_cluster_means() {
        let ds = synth_dataset(5, 500, ClimateProfile::Tropical).unwrap();
        let st = standardize_records(ds.records()).unwrap();
        let r = kmeans(st.z.view(), 7, 9).unwrap();
        for j in 0..7 {
            let members: Vec<usize> = (0..500).filter(|&i| r.assignment[i] == j).collect();
            assert_eq!(members.len(), r.sizes[j]);
            assert!(!members.is_empty());
            for d in 0..4 {
                let m = members.iter().map(|&i| st.z[[i, d]]).sum::<f64>() / members.len() as f64;
                assert!((m - r.centroids[[j, d]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let ds = synth_dataset(5, 300, ClimateProfile::Temperate).unwrap();
        let st = standardize_records(ds.records()).unwrap();
        let a = kmeans(st.z.view(), 6, 1).unwrap();
        let b = kmeans(st.z.view(), 6, 1).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.wcss.to_bits(), b.wcss.to_bits());
    }

    #[test]
    fn empty_cluster_repair_takes_farthest_point() {
        let mut assignment = vec![0, 0, 0, 1];
        let mut dist = vec![0.1, 5.0, 0.2, 0.0];
        repair_empty(&mut assignment, &mut dist, 3);
        assert_eq!(assignment, vec![0, 2, 0, 1]);
    }

    fn case_parts() -> (TechnologyCatalog, EconomicParams) {
        let c = bundled_case("case4").unwrap();
        (c.catalog, c.economics)
    }

    #[test]
    fn k_equals_n_reproduces_the_empirical_distribution() {
        let (cat, econ) = case_parts();
        let ds = synth_dataset(2, 48, ClimateProfile::Tropical).unwrap();
        let set = build_scenarios(&ds, 48, 3, &cat, &econ).unwrap();
        set.validate(econ.horizon_hours).unwrap();
        let emp = ScenarioSet::empirical(ds.records(), ds.peak_demand_kw(), &cat, &econ);
        let key = |s: &Scenario| (s.gamma_d * 1e9).round() as i64;
        let mut a: Vec<_> = set.scenarios.iter().map(|s| (key(s), s.prob)).collect();
        let mut b: Vec<_> = emp.scenarios.iter().map(|s| (key(s), s.prob)).collect();
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - 1.0 / 48.0).abs() < 1e-15);
        }
    }

    #[test]
    fn k_one_is_the_dataset_mean() {
        let (cat, econ) = case_parts();
        let ds = synth_dataset(2, 96, ClimateProfile::Tropical).unwrap();
        let set = build_scenarios(&ds, 1, 3, &cat, &econ).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.scenarios[0].prob, 1.0);
        let mean_d = ds.records().iter().map(|r| r.demand_kw).sum::<f64>() / 96.0;
        assert!((set.scenarios[0].gamma_d - mean_d / ds.peak_demand_kw()).abs() < 1e-12);
    }

    #[test]
    fn weighted_centroid_demand_matches_data_mean() {
        let (cat, econ) = case_parts();
        let ds = synth_dataset(7, 8760, ClimateProfile::Tropical).unwrap();
        let set = build_scenarios(&ds, 10, 7, &cat, &econ).unwrap();
        set.validate(econ.horizon_hours).unwrap();
        let direct = ds.records().iter().map(|r| r.demand_kw).sum::<f64>() / ds.len() as f64;
        let weighted = set.scenarios.iter().map(|s| s.prob * s.gamma_d * ds.peak_demand_kw()).sum::<f64>();
        assert!(((weighted - direct) / direct).abs() < 1e-6, "{weighted} vs {direct}");
    }

    #[test]
    fn wcss_median_decreases_with_k() {
        let ds = synth_dataset(4, 600, ClimateProfile::Temperate).unwrap();
        let st = standardize_records(ds.records()).unwrap();
        let mut prev = f64::INFINITY;
        for k in [1, 2, 4, 8, 16] {
            let mut w: Vec<f64> = (0..5).map(|s| kmeans(st.z.view(), k, s).unwrap().wcss).collect();
            w.sort_by(f64::total_cmp);
            assert!(w[2] <= prev, "k={k}");
            prev = w[2];
        }
    }

    #[test]
    fn scenario_csv_round_trip() {
        let (cat, econ) = case_parts();
        let ds = synth_dataset(2, 200, ClimateProfile::Tropical).unwrap();
        let set = build_scenarios(&ds, 5, 3, &cat, &econ).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        set.write_csv(f.path()).unwrap();
        let back = ScenarioSet::read_csv(f.path()).unwrap();
        assert_eq!(back.scenarios, set.scenarios);
    }
}
