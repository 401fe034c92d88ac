//! Output files: PAR map CSV, metrics JSON, run manifest, shading series and
//! comparison tables. All writers are deterministic (no wall-clock data, fixed
//! field order, shortest round-trip float formatting).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ResolvedConfig;
use crate::ingest::{GapReport, IngestSpec, ParUnit};
use crate::par::{Metrics, ParMap, UMOL_PER_WATT};
use crate::simulate::{ComparisonRow, RunStats, SeriesRow};
use crate::skydiffuse::ShadingTable;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checksum mismatch for {path}: manifest {expected}, file {actual}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String, ReportError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// `x,y,shaded_kwh,unshaded_kwh`, one row per cell centre, `y` outer.
pub fn write_map_csv<W: Write>(w: W, map: &ParMap) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "shaded_kwh", "unshaded_kwh"])?;
    for c in 0..map.shaded.len() {
        let (x, y) = map.cell_center(c);
        out.write_record([
            x.to_string(),
            y.to_string(),
            map.shaded[c].to_string(),
            map.unshaded[c].to_string(),
        ])?;
    }
    out.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

/// Where each modelled quantity came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub weather_file: Option<PathBuf>,
    pub ghi: String,
    pub par: String,
    pub par_unit: ParUnit,
    pub par_conversion: String,
    pub k_d_sat: String,
    pub g_cs: String,
    pub k_d: String,
}

impl Provenance {
    pub fn from_ingest(spec: &IngestSpec) -> Self {
        let c = &spec.columns;
        let col = |o: &Option<String>, fallback: &str| match o {
            Some(n) => format!("column `{n}` when present, else {fallback}"),
            None => fallback.to_string(),
        };
        Self {
            weather_file: Some(spec.path.clone()),
            ghi: format!("column `{}`", c.ghi),
            par: format!("column `{}`", c.par),
            par_unit: spec.par_unit,
            par_conversion: conversion_note(),
            k_d_sat: col(&c.k_d_sat, "absent"),
            g_cs: col(&c.g_cs, "Haurwitz clear-sky model"),
            k_d: col(&c.k_d, "decomposition model"),
        }
    }

    pub fn synthetic() -> Self {
        Self {
            weather_file: None,
            ghi: "Haurwitz clear-sky model".into(),
            par: "0.5 × GHI".into(),
            par_unit: ParUnit::WattsPerSquareMetre,
            par_conversion: conversion_note(),
            k_d_sat: "Erbs correlation on the clear-sky clearness index".into(),
            g_cs: "Haurwitz clear-sky model".into(),
            k_d: "decomposition model".into(),
        }
    }
}

fn conversion_note() -> String {
    format!("1 W/m² PAR = {UMOL_PER_WATT} µmol m⁻² s⁻¹")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Metrics,
    pub stats: RunStats,
    pub config: ResolvedConfig,
    pub provenance: Provenance,
    pub gaps: Option<GapReport>,
}

/// Input file with its checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherInput {
    pub spec: IngestSpec,
    pub sha256: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ResolvedConfig,
    pub weather: Option<WeatherInput>,
    /// Synthetic clear-sky year used instead of a weather file.
    pub synthetic_year: Option<i32>,
    pub year: Option<i32>,
    pub module_versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        config: ResolvedConfig,
        weather: Option<WeatherInput>,
        synthetic_year: Option<i32>,
        year: Option<i32>,
    ) -> Self {
        let v = env!("CARGO_PKG_VERSION").to_string();
        let module_versions = [
            "scene",
            "solar",
            "tracking",
            "shadegeom",
            "skydiffuse",
            "par",
            "ingest",
            "simulate",
            "report",
        ]
        .iter()
        .map(|m| (m.to_string(), v.clone()))
        .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: v,
            config,
            weather,
            synthetic_year,
            year,
            module_versions,
        }
    }

    /// Confirms the weather file still matches its recorded checksum.
    pub fn verify_inputs(&self) -> Result<(), ReportError> {
        if let Some(w) = &self.weather {
            let actual = sha256_file(&w.spec.path)?;
            if actual != w.sha256 {
                return Err(ReportError::Checksum {
                    path: w.spec.path.display().to_string(),
                    expected: w.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Writes `par_map.csv`, `metrics.json` and `manifest.json` into `dir`.
pub fn write_run(
    dir: &Path,
    map: &ParMap,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let map_path = dir.join("par_map.csv");
    let f = fs::File::create(&map_path).map_err(io_err(&map_path))?;
    write_map_csv(io::BufWriter::new(f), map)?;
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, report)?;
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, manifest)?;
    Ok(vec![map_path, metrics_path, manifest_path])
}

pub fn write_series_csv<W: Write>(w: W, rows: &[SeriesRow]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "timestamp",
        "elevation",
        "azimuth",
        "omega",
        "beta",
        "f_b",
        "f_b_grid",
        "f_d",
        "f_d_grid",
        "night",
    ])?;
    for r in rows {
        out.write_record([
            r.timestamp.format("%Y-%m-%d %H:%M").to_string(),
            r.elevation.to_string(),
            r.azimuth.to_string(),
            r.omega.to_string(),
            r.beta.to_string(),
            r.f_b.to_string(),
            r.f_b_grid.to_string(),
            r.f_d.to_string(),
            r.f_d_grid.to_string(),
            u8::from(r.night).to_string(),
        ])?;
    }
    out.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "label",
        "system_kind",
        "lhi_percent",
        "par_reduction_percent",
        "mean_par_kwh",
        "mean_unshaded_par_kwh",
    ])?;
    for r in rows {
        out.write_record([
            r.label.clone(),
            r.system_kind.to_string(),
            r.metrics.lhi.to_string(),
            r.metrics.par_reduction.to_string(),
            r.metrics.mean_par.to_string(),
            r.metrics.mean_unshaded_par.to_string(),
        ])?;
    }
    out.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

/// `altitude,azimuth,f_b`, altitude-major.
pub fn write_table_csv<W: Write>(w: W, table: &ShadingTable) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["altitude", "azimuth", "f_b"])?;
    let d = table.dome;
    for i in 0..d.n_alt() {
        for j in 0..d.n_az() {
            out.write_record([
                d.altitude(i).to_string(),
                d.azimuth(j).to_string(),
                table.get(i, j).to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}
