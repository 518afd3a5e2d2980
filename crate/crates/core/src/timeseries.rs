//! Hourly weather and demand measurements.
//!
//! Records carry the four uncertain parameters clustered together later on:
//! global horizontal irradiance (W/m²), wind speed (m/s), ambient temperature
//! (°C) and active demand (kW).

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURES: [&str; 4] = ["ghi", "wind", "temp", "demand_kw"];
pub const CSV_HEADER: [&str; 5] = ["timestamp", "ghi", "wind", "temp", "demand_kw"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {message}")]
    Io { path: String, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column {column}: {message}")]
    Field { row: usize, column: String, message: String },
    #[error("row {row}: timestamp {found} does not follow {previous}")]
    NonMonotone { row: usize, previous: String, found: String },
    #[error("row {row}: {missing} missing hour(s) after {previous}")]
    Gap { row: usize, previous: String, missing: i64 },
    #[error("row {row}: timestamp {found} is not on an hourly grid")]
    NotHourly { row: usize, found: String },
    #[error("dataset is empty")]
    Empty,
    #[error("synthetic datasets need at least 24 hours, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyRecord {
    pub timestamp: NaiveDateTime,
    pub ghi: f64,
    pub wind: f64,
    pub temp: f64,
    pub demand_kw: f64,
}

impl HourlyRecord {
    pub fn features(&self) -> [f64; 4] {
        [self.ghi, self.wind, self.temp, self.demand_kw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapPolicy {
    Reject,
    ForwardFill,
}

/// Validated, gap-free hourly series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<HourlyRecord>,
    peak_demand_kw: f64,
}

impl Dataset {
    /// Validates ordering, hourly spacing and signs.
    pub fn new(records: Vec<HourlyRecord>) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::Empty);
        }
        for (i, r) in records.iter().enumerate() {
            check_values(i + 1, r)?;
            if i > 0 {
                let prev = &records[i - 1];
                match hour_steps(i + 1, prev.timestamp, r.timestamp)? {
                    1 => {}
                    s if s <= 0 => {
                        return Err(IngestError::NonMonotone {
                            row: i + 1,
                            previous: fmt_ts(prev.timestamp),
                            found: fmt_ts(r.timestamp),
                        })
                    }
                    s => {
                        return Err(IngestError::Gap {
                            row: i + 1,
                            previous: fmt_ts(prev.timestamp),
                            missing: s - 1,
                        })
                    }
                }
            }
        }
        let peak_demand_kw = records.iter().map(|r| r.demand_kw).fold(f64::MIN, f64::max);
        Ok(Self { records, peak_demand_kw })
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn peak_demand_kw(&self) -> f64 {
        self.peak_demand_kw
    }

    /// Writes the dataset in the ingest CSV schema.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let path = path.as_ref();
        let io = |e: csv::Error| IngestError::Io { path: path.display().to_string(), message: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            w.write_record([
                fmt_ts(r.timestamp),
                r.ghi.to_string(),
                r.wind.to_string(),
                r.temp.to_string(),
                r.demand_kw.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

fn fmt_ts(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_ts(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn hour_steps(row: usize, prev: NaiveDateTime, next: NaiveDateTime) -> Result<i64, IngestError> {
    let secs = (next - prev).num_seconds();
    if secs % 3600 != 0 || next.minute() != 0 || next.second() != 0 {
        return Err(IngestError::NotHourly { row, found: fmt_ts(next) });
    }
    Ok(secs / 3600)
}

fn check_values(row: usize, r: &HourlyRecord) -> Result<(), IngestError> {
    let values = [("ghi", r.ghi, true), ("wind", r.wind, true), ("temp", r.temp, false), ("demand_kw", r.demand_kw, true)];
    for (column, v, nonneg) in values {
        if !v.is_finite() {
            return Err(IngestError::Field { row, column: column.into(), message: format!("non-finite value {v}") });
        }
        if nonneg && v < 0.0 {
            return Err(IngestError::Field { row, column: column.into(), message: format!("negative value {v}") });
        }
    }
    Ok(())
}

/// Reads `timestamp,ghi,wind,temp,demand_kw` rows. Column order is free;
/// extra columns are ignored.
pub fn ingest_csv(path: impl AsRef<Path>, gap_policy: GapPolicy) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })?
        .clone();
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }

    let mut records: Vec<HourlyRecord> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::Field { row, column: "*".into(), message: e.to_string() })?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let timestamp = parse_ts(field(0)).ok_or_else(|| IngestError::Field {
            row,
            column: "timestamp".into(),
            message: format!("cannot parse `{}` as an ISO-8601 hour", field(0)),
        })?;
        let mut values = [0.0; 4];
        for (k, v) in values.iter_mut().enumerate() {
            *v = field(k + 1).parse().map_err(|_| IngestError::Field {
                row,
                column: CSV_HEADER[k + 1].into(),
                message: format!("cannot parse `{}` as a number", field(k + 1)),
            })?;
        }
        let r = HourlyRecord { timestamp, ghi: values[0], wind: values[1], temp: values[2], demand_kw: values[3] };
        check_values(row, &r)?;
        if let Some(prev) = records.last().copied() {
            let steps = hour_steps(row, prev.timestamp, timestamp)?;
            if steps <= 0 {
                return Err(IngestError::NonMonotone { row, previous: fmt_ts(prev.timestamp), found: fmt_ts(timestamp) });
            }
            if steps > 1 {
                match gap_policy {
                    GapPolicy::Reject => {
                        return Err(IngestError::Gap { row, previous: fmt_ts(prev.timestamp), missing: steps - 1 })
                    }
                    GapPolicy::ForwardFill => {
                        for h in 1..steps {
                            records.push(HourlyRecord { timestamp: prev.timestamp + Duration::hours(h), ..prev });
                        }
                    }
                }
            }
        }
        records.push(r);
    }
    let ds = Dataset::new(records)?;
    log::info!("ingested {} hourly records from {}", ds.len(), path.display());
    Ok(ds)
}

/// Z-scored feature matrix with the per-feature affine maps that produced it.
#[derive(Debug, Clone)]
pub struct Standardized {
    /// rows = hours, cols = [ghi, wind, temp, demand_kw]
    pub z: Array2<f64>,
    pub mean: [f64; 4],
    /// Population standard deviation (divides by n).
    pub std: [f64; 4],
    pub warnings: Vec<String>,
}

impl Standardized {
    /// Maps a standardized row back to physical units.
    pub fn unstandardize(&self, row: &[f64]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = if self.std[k] > 0.0 { self.mean[k] + row[k] * self.std[k] } else { self.mean[k] };
        }
        out
    }
}

pub fn standardize(ds: &Dataset) -> Result<Standardized, IngestError> {
    standardize_records(ds.records())
}

/// Same as [`standardize`] for records that need not form a valid series
/// (bootstrap resamples, for instance).
pub fn standardize_records(records: &[HourlyRecord]) -> Result<Standardized, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let n = records.len();
    let mut mean = [0.0; 4];
    for r in records {
        for (m, v) in mean.iter_mut().zip(r.features()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = [0.0; 4];
    for r in records {
        for k in 0..4 {
            let d = r.features()[k] - mean[k];
            var[k] += d * d;
        }
    }
    let std = var.map(|v| (v / n as f64).sqrt());
    let mut warnings = Vec::new();
    for k in 0..4 {
        if !(std[k] > 0.0) {
            warnings.push(format!("feature `{}` is constant; its z-scores are set to 0", FEATURES[k]));
        }
    }
    let mut z = Array2::zeros((n, 4));
    for (i, r) in records.iter().enumerate() {
        let f = r.features();
        for k in 0..4 {
            if std[k] > 0.0 {
                z[[i, k]] = (f[k] - mean[k]) / std[k];
            }
        }
    }
    Ok(Standardized { z, mean, std, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClimateProfile {
    Tropical,
    Temperate,
}

/// Deterministic synthetic year of weather and demand, starting 2018-01-01.
///
/// Irradiance follows a clear-sky bell between sunrise and sunset scaled by an
/// AR(1) clearness index; wind is an AR(1) Gaussian process mapped through a
/// Weibull quantile; temperature has seasonal and diurnal sinusoids; demand
/// has morning/evening peaks, a weekend dip and a weak temperature response.
pub fn synth_dataset(seed: u64, hours: usize, profile: ClimateProfile) -> Result<Dataset, IngestError> {
    if hours < 24 {
        return Err(IngestError::TooShort(hours));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time");
    let (ghi_peak, wind_scale, wind_shape, t_mean, t_season, t_day, cooling) = match profile {
        ClimateProfile::Tropical => (1000.0, 6.5, 2.0, 28.0, 1.5, 4.0, 0.012),
        ClimateProfile::Temperate => (850.0, 7.0, 2.0, 11.0, 9.0, 5.0, 0.0),
    };
    let std_normal = statrs::distribution::Normal::standard();
    let mut clear = 0.0f64;
    let mut wind_state = 0.0f64;
    let mut records = Vec::with_capacity(hours);
    for h in 0..hours {
        let timestamp = start + Duration::hours(h as i64);
        let day = (h / 24) as f64;
        let hour = (h % 24) as f64;
        let season = (2.0 * std::f64::consts::PI * (day - 172.0) / 365.0).cos();

        let half_day = match profile {
            ClimateProfile::Tropical => 6.0 + 0.3 * season,
            ClimateProfile::Temperate => 6.0 + 2.5 * season,
        };
        let solar_noon = 12.0;
        let x = (hour - solar_noon) / half_day;
        let bell = if x.abs() < 1.0 { (std::f64::consts::FRAC_PI_2 * x).cos() } else { 0.0 };
        clear = 0.8 * clear + 0.6 * noise.sample(&mut rng);
        let clearness = (0.75 + 0.2 * clear).clamp(0.1, 1.0);
        let seasonal_peak = match profile {
            ClimateProfile::Tropical => ghi_peak,
            ClimateProfile::Temperate => ghi_peak * (0.65 + 0.35 * season),
        };
        let ghi = if hour == 0.0 { 0.0 } else { (seasonal_peak * bell * clearness).clamp(0.0, 1200.0) };

        wind_state = 0.9 * wind_state + (1.0f64 - 0.81).sqrt() * noise.sample(&mut rng);
        let u = statrs::distribution::ContinuousCDF::cdf(&std_normal, wind_state).clamp(1e-12, 1.0 - 1e-12);
        let diurnal_wind = 1.0 + 0.15 * (2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0).cos();
        let wind = (wind_scale * diurnal_wind * (-(1.0 - u).ln()).powf(1.0 / wind_shape)).clamp(0.0, 30.0);

        let temp = t_mean
            + t_season * season
            + t_day * (2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0).cos()
            + 0.8 * noise.sample(&mut rng);

        let weekday = (h / 24) % 7;
        let weekly = if weekday >= 5 { 0.85 } else { 1.0 };
        let morning = (-((hour - 9.0) / 2.5).powi(2)).exp();
        let evening = (-((hour - 19.5) / 2.5).powi(2)).exp();
        let shape = 0.55 + 0.25 * morning + 0.4 * evening;
        let thermal = 1.0 + cooling * (temp - t_mean).max(0.0);
        let demand_kw = (1000.0 * shape * weekly * thermal * (1.0 + 0.05 * noise.sample(&mut rng))).max(0.0);

        records.push(HourlyRecord { timestamp, ghi, wind, temp, demand_kw });
        // keep the stream position independent of branch outcomes
        let _: u32 = rng.random();
    }
    Dataset::new(records)
}
