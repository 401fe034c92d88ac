//! Weather CSV ingestion.
//!
//! Input is UTF-8, comma separated, `.` decimal, one header row. Timestamps
//! are UTC and mark the start of each interval. Empty cells, `NA`, `NaN` and
//! `-9999` mark a missing value: a missing mandatory value turns the row into a
//! gap, a missing optional value leaves that field unset.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{WeatherRecord, UMOL_PER_WATT};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}: {column} = {value} violates its unit range")]
    UnitViolation {
        line: u64,
        column: String,
        value: f64,
    },
    #[error("line {line}: {message}")]
    CadenceViolation { line: u64, message: String },
    #[error("no usable records")]
    Empty,
}

/// Header names of the input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub timestamp: String,
    pub ghi: String,
    pub par: String,
    #[serde(default)]
    pub k_d_sat: Option<String>,
    #[serde(default)]
    pub g_cs: Option<String>,
    #[serde(default)]
    pub k_d: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            ghi: "ghi".into(),
            par: "par".into(),
            k_d_sat: Some("k_d_sat".into()),
            g_cs: Some("g_cs".into()),
            k_d: Some("k_d".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParUnit {
    #[default]
    WattsPerSquareMetre,
    /// µmol m⁻² s⁻¹, divided by 4.57 on ingest.
    MicromolPerSquareMetreSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    #[default]
    Hourly,
    /// Half-hourly rows averaged to hourly means.
    HalfHourly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMap,
    /// chrono format string; RFC 3339 and `%Y-%m-%d %H:%M[:%S]` are always accepted.
    #[serde(default)]
    pub timestamp_format: Option<String>,
    #[serde(default)]
    pub par_unit: ParUnit,
    #[serde(default)]
    pub cadence: Cadence,
}

impl IngestSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            columns: ColumnMap::default(),
            timestamp_format: None,
            par_unit: ParUnit::default(),
            cadence: Cadence::default(),
        }
    }
}

/// Missing hourly intervals and row statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub source_rows: usize,
    /// Rows whose mandatory values were missing.
    pub missing_value_rows: usize,
    /// Hourly slots between the first and last record with no record.
    pub missing_hours: usize,
    /// Contiguous missing ranges `[start, end]` (hour starts).
    pub gaps: Vec<(NaiveDateTime, NaiveDateTime)>,
    /// Sum of GHI over the source rows that carried a value [W/m²].
    pub source_ghi_sum: f64,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.missing_hours == 0 && self.missing_value_rows == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub records: Vec<WeatherRecord>,
    pub gaps: GapReport,
    pub par_unit: ParUnit,
}

pub fn ingest_weather(spec: &IngestSpec) -> Result<WeatherSeries, IngestError> {
    let file = std::fs::File::open(&spec.path).map_err(|source| IngestError::Io {
        path: spec.path.display().to_string(),
        source,
    })?;
    ingest_reader(file, spec)
}

pub fn ingest_path(path: &Path) -> Result<WeatherSeries, IngestError> {
    ingest_weather(&IngestSpec::new(path))
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty()
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("nan")
        || t == "-9999"
        || t == "-9999.0"
}

fn parse_timestamp(s: &str, fmt: Option<&str>) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Some(f) = fmt {
        return NaiveDateTime::parse_from_str(s, f).ok();
    }
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y%m%d%H%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

struct Row {
    t: NaiveDateTime,
    values: Option<WeatherRecord>,
}

pub fn ingest_reader<R: Read>(reader: R, spec: &IngestSpec) -> Result<WeatherSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let c = &spec.columns;
    let (i_t, i_ghi, i_par) = (need(&c.timestamp)?, need(&c.ghi)?, need(&c.par)?);
    // optional columns named explicitly must exist unless they are the defaults
    let optional = |name: &Option<String>, default: &str| -> Result<Option<usize>, IngestError> {
        match name {
            None => Ok(None),
            Some(n) => match find(n) {
                Some(i) => Ok(Some(i)),
                None if n == default => Ok(None),
                None => Err(IngestError::MissingColumn(n.clone())),
            },
        }
    };
    let i_kds = optional(&c.k_d_sat, "k_d_sat")?;
    let i_gcs = optional(&c.g_cs, "g_cs")?;
    let i_kd = optional(&c.k_d, "k_d")?;
    let par_scale = match spec.par_unit {
        ParUnit::WattsPerSquareMetre => 1.0,
        ParUnit::MicromolPerSquareMetreSecond => 1.0 / UMOL_PER_WATT,
    };

    let mut report = GapReport::default();
    let mut rows: Vec<Row> = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| IngestError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        report.source_rows += 1;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let t = parse_timestamp(field(i_t), spec.timestamp_format.as_deref()).ok_or_else(|| {
            IngestError::MalformedRow {
                line,
                message: format!("cannot parse timestamp `{}`", field(i_t)),
            }
        })?;
        let number = |i: usize, name: &str| -> Result<Option<f64>, IngestError> {
            let s = field(i);
            if is_missing(s) {
                return Ok(None);
            }
            let v: f64 = s.trim().parse().map_err(|_| IngestError::MalformedRow {
                line,
                message: format!("{name}: `{s}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::MalformedRow {
                    line,
                    message: format!("{name}: non-finite value"),
                });
            }
            Ok(Some(v))
        };
        let nonneg = |v: Option<f64>, name: &str| -> Result<Option<f64>, IngestError> {
            match v {
                Some(x) if x < 0.0 => Err(IngestError::UnitViolation {
                    line,
                    column: name.to_string(),
                    value: x,
                }),
                _ => Ok(v),
            }
        };
        let fraction = |v: Option<f64>, name: &str| -> Result<Option<f64>, IngestError> {
            match v {
                Some(x) if !(0.0..=1.0).contains(&x) => Err(IngestError::UnitViolation {
                    line,
                    column: name.to_string(),
                    value: x,
                }),
                _ => Ok(v),
            }
        };
        let ghi = nonneg(number(i_ghi, &c.ghi)?, &c.ghi)?;
        let par = nonneg(number(i_par, &c.par)?, &c.par)?;
        let opt = |i: Option<usize>, name: &Option<String>| -> Result<Option<f64>, IngestError> {
            match i {
                Some(i) => number(i, name.as_deref().unwrap_or("")),
                None => Ok(None),
            }
        };
        let k_d_sat = fraction(opt(i_kds, &c.k_d_sat)?, c.k_d_sat.as_deref().unwrap_or(""))?;
        let g_cs = nonneg(opt(i_gcs, &c.g_cs)?, c.g_cs.as_deref().unwrap_or(""))?;
        let k_d = fraction(opt(i_kd, &c.k_d)?, c.k_d.as_deref().unwrap_or(""))?;
        if let Some(g) = ghi {
            report.source_ghi_sum += g;
        }
        let values = match (ghi, par) {
            (Some(ghi), Some(par)) => Some(WeatherRecord {
                timestamp: t,
                ghi,
                par_total: par * par_scale,
                k_d_sat,
                g_cs,
                k_d_measured: k_d,
            }),
            _ => {
                report.missing_value_rows += 1;
                None
            }
        };
        if let Some(prev) = rows.last() {
            if t <= prev.t {
                return Err(IngestError::CadenceViolation {
                    line,
                    message: format!("timestamp {t} does not follow {}", prev.t),
                });
            }
        }
        let on_grid = t.second() == 0
            && match spec.cadence {
                Cadence::Hourly => t.minute() == 0,
                Cadence::HalfHourly => t.minute() % 30 == 0,
            };
        if !on_grid {
            return Err(IngestError::CadenceViolation {
                line,
                message: format!("timestamp {t} is off the {:?} grid", spec.cadence),
            });
        }
        rows.push(Row { t, values });
    }

    let records: Vec<WeatherRecord> = match spec.cadence {
        Cadence::Hourly => rows.into_iter().filter_map(|r| r.values).collect(),
        Cadence::HalfHourly => aggregate_half_hours(rows),
    };
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let (missing, gaps) = hourly_gaps(&records);
    report.missing_hours = missing;
    report.gaps = gaps;
    Ok(WeatherSeries {
        records,
        gaps: report,
        par_unit: spec.par_unit,
    })
}

fn aggregate_half_hours(rows: Vec<Row>) -> Vec<WeatherRecord> {
    let mut by_hour: BTreeMap<NaiveDateTime, Vec<WeatherRecord>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.values {
            let hour = r.t.with_minute(0).expect("valid minute");
            by_hour.entry(hour).or_default().push(v);
        }
    }
    by_hour
        .into_iter()
        .map(|(hour, parts)| {
            let n = parts.len() as f64;
            let mean = |f: fn(&WeatherRecord) -> f64| parts.iter().map(f).sum::<f64>() / n;
            let mean_opt = |f: fn(&WeatherRecord) -> Option<f64>| {
                let v: Vec<f64> = parts.iter().filter_map(f).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            WeatherRecord {
                timestamp: hour,
                ghi: mean(|r| r.ghi),
                par_total: mean(|r| r.par_total),
                k_d_sat: mean_opt(|r| r.k_d_sat),
                g_cs: mean_opt(|r| r.g_cs),
                k_d_measured: mean_opt(|r| r.k_d_measured),
            }
        })
        .collect()
}

fn hourly_gaps(records: &[WeatherRecord]) -> (usize, Vec<(NaiveDateTime, NaiveDateTime)>) {
    let mut missing = 0;
    let mut gaps = Vec::new();
    for w in records.windows(2) {
        let hours = (w[1].timestamp - w[0].timestamp).num_hours();
        if hours > 1 {
            missing += (hours - 1) as usize;
            gaps.push((
                w[0].timestamp + Duration::hours(1),
                w[1].timestamp - Duration::hours(1),
            ));
        }
    }
    (missing, gaps)
}

/// Writes records in the default column layout (W/m² PAR).
pub fn write_weather<W: std::io::Write>(w: W, records: &[WeatherRecord]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "ghi", "par", "k_d_sat", "g_cs", "k_d"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        out.write_record([
            r.timestamp.format("%Y-%m-%d %H:%M").to_string(),
            r.ghi.to_string(),
            r.par_total.to_string(),
            opt(r.k_d_sat),
            opt(r.g_cs),
            opt(r.k_d_measured),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> IngestSpec {
        IngestSpec::new("mem.csv")
    }

    fn read(text: &str, spec: &IngestSpec) -> Result<WeatherSeries, IngestError> {
        ingest_reader(text.as_bytes(), spec)
    }

    #[test]
    fn well_formed_file() {
        let mut s = String::from("timestamp,ghi,par,k_d_sat\n");
        for h in 0..48 {
            s.push_str(&format!(
                "2018-06-{:02} {:02}:00,{},{},0.3\n",
                1 + h / 24,
                h % 24,
                h * 10,
                h * 4
            ));
        }
        let w = read(&s, &spec()).unwrap();
        assert_eq!(w.records.len(), 48);
        assert!(w.gaps.is_empty());
        assert_eq!(w.records[5].k_d_sat, Some(0.3));
        assert_eq!(w.records[5].g_cs, None);
        let total: f64 = w.records.iter().map(|r| r.ghi).sum();
        assert!((total - w.gaps.source_ghi_sum).abs() <= 1e-6 * total);
    }

    #[test]
    fn negative_ghi_is_a_unit_violation_with_line() {
        let s = "timestamp,ghi,par\n2018-01-01 10:00,5,2\n2018-01-01 11:00,-5,2\n";
        match read(s, &spec()) {
            Err(IngestError::UnitViolation {
                line,
                column,
                value,
            }) => {
                assert_eq!((line, column.as_str(), value), (3, "ghi", -5.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn micromol_roundtrip() {
        let s = "timestamp,ghi,par\n2018-01-01 10:00,100,457.0\n2018-01-01 11:00,100,123.456\n";
        let mut sp = spec();
        sp.par_unit = ParUnit::MicromolPerSquareMetreSecond;
        let w = read(s, &sp).unwrap();
        assert!((w.records[0].par_total - 100.0).abs() < 1e-12);
        assert!((w.records[1].par_total * UMOL_PER_WATT - 123.456).abs() < 1e-9);
    }

    #[test]
    fn gaps_and_missing_values() {
        let s = "timestamp,ghi,par\n2018-01-01 10:00,5,2\n2018-01-01 11:00,NA,2\n2018-01-01 14:00,1,1\n";
        let w = read(s, &spec()).unwrap();
        assert_eq!(w.records.len(), 2);
        assert_eq!(w.gaps.missing_value_rows, 1);
        assert_eq!(w.gaps.missing_hours, 3);
        assert_eq!(w.gaps.gaps.len(), 1);
    }

    #[test]
    fn cadence_violations() {
        let s = "timestamp,ghi,par\n2018-01-01 10:00,5,2\n2018-01-01 10:00,5,2\n";
        assert!(matches!(
            read(s, &spec()),
            Err(IngestError::CadenceViolation { line: 3, .. })
        ));
        let s = "timestamp,ghi,par\n2018-01-01 10:30,5,2\n";
        assert!(matches!(
            read(s, &spec()),
            Err(IngestError::CadenceViolation { line: 2, .. })
        ));
    }

    #[test]
    fn half_hourly_aggregation() {
        let s = "timestamp,ghi,par\n2018-01-01 10:00,100,40\n2018-01-01 10:30,200,60\n2018-01-01 11:00,50,10\n";
        let mut sp = spec();
        sp.cadence = Cadence::HalfHourly;
        let w = read(s, &sp).unwrap();
        assert_eq!(w.records.len(), 2);
        assert_eq!((w.records[0].ghi, w.records[0].par_total), (150.0, 50.0));
        assert_eq!(w.records[1].ghi, 50.0);
    }

    #[test]
    fn malformed_rows() {
        let s = "timestamp,ghi,par\nyesterday,5,2\n";
        assert!(matches!(
            read(s, &spec()),
            Err(IngestError::MalformedRow { line: 2, .. })
        ));
        let s = "timestamp,ghi,par\n2018-01-01 10:00,five,2\n";
        assert!(matches!(
            read(s, &spec()),
            Err(IngestError::MalformedRow { line: 2, .. })
        ));
        let s = "time,ghi,par\n";
        assert!(matches!(
            read(s, &spec()),
            Err(IngestError::MissingColumn(_))
        ));
    }

    #[test]
    fn custom_columns_and_format() {
        let s = "TIMESTAMP,SW_IN,PPFD_IN,KD\n201801011000,300,600,0.5\n";
        let sp = IngestSpec {
            columns: ColumnMap {
                timestamp: "TIMESTAMP".into(),
                ghi: "SW_IN".into(),
                par: "PPFD_IN".into(),
                k_d_sat: Some("KD".into()),
                g_cs: None,
                k_d: None,
            },
            timestamp_format: Some("%Y%m%d%H%M".into()),
            par_unit: ParUnit::MicromolPerSquareMetreSecond,
            ..spec()
        };
        let w = read(s, &sp).unwrap();
        assert_eq!(w.records[0].k_d_sat, Some(0.5));
        assert!((w.records[0].par_total - 600.0 / 4.57).abs() < 1e-12);
    }

    #[test]
    fn write_then_read() {
        let s = "timestamp,ghi,par,k_d_sat\n2018-01-01 10:00,5.5,2.25,0.1\n2018-01-01 11:00,6,3,\n";
        let w = read(s, &spec()).unwrap();
        let mut buf = Vec::new();
        write_weather(&mut buf, &w.records).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap(), &spec()).unwrap();
        assert_eq!(back.records, w.records);
    }
}
