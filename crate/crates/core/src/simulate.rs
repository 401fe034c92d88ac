//! End-to-end simulation: solar position, tracking, beam and diffuse shading,
//! decomposition and annual accumulation.
//!
//! Results do not depend on the worker count: per-record work is collected in
//! record order, beam sums are reduced over fixed chunks merged in order, and
//! diffuse sums are grouped by pose fingerprint in sorted key order.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DiffuseMode, ResolvedConfig};
use crate::par::{check_coverage, decompose, metrics, Metrics, ParError, ParMap, WeatherRecord};
use crate::scene::{build_scene, Scene, SceneError, SystemKind};
use crate::shadegeom::{beam_factor_exact, cell_occlusion, pose_scene};
use crate::skydiffuse::{
    build_shading_table, diffuse_factor, per_cell_diffuse, DiffuseResult, PoseCache,
    PoseFingerprint, ShadingTable, TableStore,
};
use crate::solar::{radiation_scalars, solar_position, solar_vector, SolarError, SolarPosition};
use crate::tracking::{axis_frame, pose_for, AxisGeometry, Pose, TrackerAngles};
use crate::Vec3;

/// Records per beam-accumulation chunk.
const BEAM_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("solar: {0}")]
    Solar(#[from] SolarError),
    #[error("par: {0}")]
    Par(#[from] ParError),
    #[error("weather: records span several years ({0} and {1})")]
    MixedYears(i32, i32),
    #[error("weather: no records")]
    NoRecords,
    #[error("shading series: {0} lies outside the weather range")]
    DateOutsideWeather(NaiveDate),
    #[error("compare: all configurations must share one site to share a weather input")]
    MismatchedWeather,
    #[error("compare: at least two configurations required, got {0}")]
    Arity(usize),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Geometry state of one interval, evaluated at its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub position: SolarPosition,
    pub angles: TrackerAngles<f64>,
    /// False when the sun is down and the tracker is stowed.
    pub day: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub records: usize,
    pub dark_records: usize,
    pub below_horizon_records: usize,
    pub backtracked_records: usize,
    pub pose_keys: usize,
    pub daylight_hours_expected: usize,
    pub daylight_hours_present: usize,
    pub coverage: Option<f64>,
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub map: ParMap,
    pub metrics: Metrics,
    pub stats: RunStats,
}

/// A configured scene plus its diffuse cache.
pub struct Simulator {
    pub config: ResolvedConfig,
    pub scene: Scene<f64>,
    geometry: AxisGeometry<f64>,
    diffuse: PoseCache<DiffuseResult>,
    tables: PoseCache<ShadingTable>,
    store: Option<TableStore>,
}

impl Simulator {
    pub fn new(config: ResolvedConfig) -> Result<Self, SimError> {
        let scene = build_scene::<f64>(&config.layout)?;
        let geometry = AxisGeometry::from_layout(&config.layout);
        Ok(Self {
            config,
            scene,
            geometry,
            diffuse: PoseCache::new(),
            tables: PoseCache::new(),
            store: None,
        })
    }

    /// Persists shading tables under `store` and reuses tables found there.
    pub fn with_table_store(mut self, store: TableStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn kind(&self) -> SystemKind {
        self.config.layout.system_kind
    }

    fn fixed_tilt(&self) -> f64 {
        self.config.layout.fixed_tilt.unwrap_or(0.0)
    }

    /// Pose when the sun is down: fixed systems keep their tilt, trackers lie flat.
    pub fn stow(&self) -> TrackerAngles<f64> {
        match self.kind() {
            SystemKind::Vertical => TrackerAngles::fixed(self.fixed_tilt()),
            _ => TrackerAngles::fixed(0.0),
        }
    }

    /// Tracker pose for a scene-frame solar vector.
    pub fn pose(&self, s: &Vec3) -> Pose<f64> {
        let l = &self.config.layout;
        let s_tracker = axis_frame(s, l.panel_azimuth, l.axis_tilt);
        pose_for(
            self.kind(),
            self.fixed_tilt(),
            &self.geometry,
            &s_tracker,
            self.config.options.tracking_mode,
        )
    }

    /// Geometry for the interval starting at `t`.
    pub fn step(&self, t: &NaiveDateTime) -> Result<Step, SimError> {
        let mid = *t + Duration::minutes(30);
        let position = solar_position(&mid, &self.config.site)?;
        let s = solar_vector(&position);
        Ok(match self.pose(&s) {
            Pose::Day(angles) if position.is_up() => Step {
                position,
                angles,
                day: true,
            },
            _ => Step {
                position,
                angles: self.stow(),
                day: false,
            },
        })
    }

    pub fn fingerprint(&self, angles: &TrackerAngles<f64>) -> PoseFingerprint {
        PoseFingerprint::new(self.kind(), angles, self.config.options.pose_bucket)
    }

    /// Per-cell diffuse factors for a pose bucket, computed once.
    pub fn diffuse_for(&self, fp: PoseFingerprint) -> Arc<DiffuseResult> {
        self.diffuse.get_or_insert_with(fp, || {
            let posed = pose_scene(&self.scene, &fp.representative());
            let mut r = per_cell_diffuse(&posed, &self.scene.crop, self.config.options.dome());
            r.fingerprint = Some(fp);
            r
        })
    }

    /// Exact-union shading table for a pose bucket, computed once.
    pub fn table_for(&self, fp: PoseFingerprint) -> Arc<ShadingTable> {
        let dome = self.config.options.dome();
        self.tables.get_or_insert_with(fp, || {
            if let Some(t) = self.store.as_ref().and_then(|s| s.load(&fp, dome)) {
                return t;
            }
            let posed = pose_scene(&self.scene, &fp.representative());
            let mut t = build_shading_table(&posed, &self.scene.crop, dome);
            t.fingerprint = Some(fp);
            if let Some(s) = &self.store {
                let _ = s.save(&t);
            }
            t
        })
    }

    /// Number of distinct diffuse evaluations so far.
    pub fn diffuse_builds(&self) -> usize {
        self.diffuse.builds()
    }

    fn in_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, SimError> {
        match self.config.options.workers {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| SimError::Pool(e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }

    pub fn run(&self, records: &[WeatherRecord]) -> Result<SimulationOutput, SimError> {
        self.in_pool(|| self.run_inner(records))?
    }

    fn run_inner(&self, records: &[WeatherRecord]) -> Result<SimulationOutput, SimError> {
        let first = records.first().ok_or(SimError::NoRecords)?;
        let mut stats = RunStats {
            records: records.len(),
            ..Default::default()
        };
        if self.config.options.require_full_year {
            let year = first.timestamp.year();
            if let Some(r) = records.iter().find(|r| r.timestamp.year() != year) {
                return Err(SimError::MixedYears(year, r.timestamp.year()));
            }
            stats.year = Some(year);
        }

        let coef = self.config.options.coefficients;
        let steps: Vec<(Step, Option<crate::par::DecompositionResult>)> = records
            .par_iter()
            .map(|r| {
                let step = self.step(&r.timestamp)?;
                let mid = r.timestamp + Duration::minutes(30);
                let scalars = radiation_scalars(&mid, &self.config.site, &step.position, r.g_cs);
                let d = decompose(r, &step.position, &scalars, &coef)?;
                Ok((step, d))
            })
            .collect::<Result<_, SimError>>()?;

        if let Some(year) = stats.year {
            let expected = self.daylight_hours(year)?;
            let present = steps.iter().filter(|(s, _)| s.position.is_up()).count();
            stats.daylight_hours_expected = expected;
            stats.daylight_hours_present = present;
            stats.coverage = Some(check_coverage(present, expected)?);
        }
        for (s, d) in &steps {
            match d {
                None => stats.dark_records += 1,
                Some(_) if !s.day => stats.below_horizon_records += 1,
                Some(_) => {}
            }
            if s.day && s.angles.backtracked {
                stats.backtracked_records += 1;
            }
        }

        let crop = &self.scene.crop;
        let n = crop.cell_count();

        // beam: fixed chunks, merged in chunk order
        let partials: Vec<Vec<f64>> = steps
            .par_chunks(BEAM_CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; n];
                for (step, d) in chunk {
                    let Some(d) = d else { continue };
                    if d.par_beam <= 0.0 || !step.day {
                        continue;
                    }
                    let s = solar_vector(&step.position);
                    let posed = pose_scene(&self.scene, &step.angles);
                    let occ = cell_occlusion(&posed, &s, crop);
                    for (a, shaded) in acc.iter_mut().zip(&occ.shaded) {
                        if !shaded {
                            *a += d.par_beam;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut beam = vec![0.0; n];
        for p in &partials {
            for (a, b) in beam.iter_mut().zip(p) {
                *a += b;
            }
        }

        // diffuse: grouped by pose bucket
        let mut groups: BTreeMap<PoseFingerprint, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (step, d) in &steps {
            let Some(d) = d else { continue };
            total += d.par_beam + d.par_diffuse;
            if d.par_diffuse > 0.0 {
                *groups.entry(self.fingerprint(&step.angles)).or_insert(0.0) += d.par_diffuse;
            }
        }
        stats.pose_keys = groups.len();
        let keys: Vec<PoseFingerprint> = groups.keys().copied().collect();
        let factors: Vec<Arc<DiffuseResult>> =
            keys.par_iter().map(|fp| self.diffuse_for(*fp)).collect();

        let mut map = ParMap::new(
            crop.nx,
            crop.ny,
            (crop.origin.x, crop.origin.y),
            crop.grid_resolution,
        );
        let mut shaded = beam;
        for (fp, f) in keys.iter().zip(&factors) {
            let sum = groups[fp];
            match self.config.options.diffuse_mode {
                DiffuseMode::PerCell => {
                    for (a, fd) in shaded.iter_mut().zip(&f.f_d_cells) {
                        *a += sum * (1.0 - fd);
                    }
                }
                DiffuseMode::AggregateUniform => {
                    let v = sum * (1.0 - f.f_d_aggregate);
                    for a in shaded.iter_mut() {
                        *a += v;
                    }
                }
            }
        }
        // hourly records: W/m² × 1 h → Wh/m², reported in kWh/m²
        for (m, s) in map.shaded.iter_mut().zip(&shaded) {
            *m = s / 1000.0;
        }
        map.unshaded.iter_mut().for_each(|u| *u = total / 1000.0);

        let metrics = metrics(&map, self.config.options.lhi_mode)?;
        Ok(SimulationOutput {
            map,
            metrics,
            stats,
        })
    }

    /// Hours of `year` whose midpoint has the sun above the horizon.
    pub fn daylight_hours(&self, year: i32) -> Result<usize, SimError> {
        let mut t = NaiveDate::from_ymd_opt(year, 1, 1)
            .ok_or(SimError::NoRecords)?
            .and_hms_opt(0, 30, 0)
            .unwrap();
        let mut count = 0;
        while t.year() == year {
            if solar_position(&t, &self.config.site)?.is_up() {
                count += 1;
            }
            t += Duration::hours(1);
        }
        Ok(count)
    }

    /// Hourly shading factors for whole days.
    pub fn shading_series(
        &self,
        dates: &[NaiveDate],
        weather_range: Option<(NaiveDateTime, NaiveDateTime)>,
    ) -> Result<Vec<SeriesRow>, SimError> {
        if let Some((lo, hi)) = weather_range {
            if let Some(d) = dates.iter().find(|d| {
                let start = d.and_hms_opt(0, 0, 0).unwrap();
                start < lo || start + Duration::hours(23) > hi
            }) {
                return Err(SimError::DateOutsideWeather(*d));
            }
        }
        let times: Vec<NaiveDateTime> = dates
            .iter()
            .flat_map(|d| (0..24).map(move |h| d.and_hms_opt(h, 0, 0).unwrap()))
            .collect();
        self.in_pool(|| {
            times
                .par_iter()
                .map(|t| self.series_row(t))
                .collect::<Result<Vec<_>, _>>()
        })?
    }

    /// Shading factors for the interval starting at `t`.
    pub fn series_row(&self, t: &NaiveDateTime) -> Result<SeriesRow, SimError> {
        let step = self.step(t)?;
        let fp = self.fingerprint(&step.angles);
        let f_d = diffuse_factor(&self.table_for(fp));
        let f_d_grid = self.diffuse_for(fp).f_d_aggregate;
        let (f_b, f_b_grid) = if step.day {
            let s = solar_vector(&step.position);
            let posed = pose_scene(&self.scene, &step.angles);
            (
                beam_factor_exact(&posed, &s, &self.scene.crop),
                cell_occlusion(&posed, &s, &self.scene.crop).f_b,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(SeriesRow {
            timestamp: *t,
            elevation: step.position.elevation,
            azimuth: step.position.azimuth,
            omega: step.angles.omega_itc,
            beta: step.angles.beta_itc,
            f_b,
            f_b_grid,
            f_d,
            f_d_grid,
            night: !step.day,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    /// Interval start, UTC.
    pub timestamp: NaiveDateTime,
    pub elevation: f64,
    pub azimuth: f64,
    pub omega: f64,
    pub beta: f64,
    /// Exact polygon-union beam shading factor.
    pub f_b: f64,
    /// Share of grid cells whose centre is shaded.
    pub f_b_grid: f64,
    /// Dome-weighted diffuse shading factor from the exact shading table.
    pub f_d: f64,
    /// Mean per-cell diffuse factor.
    pub f_d_grid: f64,
    pub night: bool,
}

/// March and September equinoxes, June and December solstices of `year`.
pub fn representative_days(year: i32) -> [NaiveDate; 4] {
    [(3, 20), (6, 21), (9, 22), (12, 21)].map(|(m, d)| NaiveDate::from_ymd_opt(year, m, d).unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub system_kind: SystemKind,
    pub metrics: Metrics,
}

/// Runs every configuration on one weather series.
pub fn compare(
    configs: &[(String, ResolvedConfig)],
    records: &[WeatherRecord],
) -> Result<Vec<ComparisonRow>, SimError> {
    if configs.len() < 2 {
        return Err(SimError::Arity(configs.len()));
    }
    let site = &configs[0].1.site;
    if configs
        .iter()
        .any(|(_, c)| c.site.latitude != site.latitude || c.site.longitude != site.longitude)
    {
        return Err(SimError::MismatchedWeather);
    }
    configs
        .iter()
        .map(|(label, c)| {
            let out = Simulator::new(c.clone())?.run(records)?;
            Ok(ComparisonRow {
                label: label.clone(),
                system_kind: c.layout.system_kind,
                metrics: out.metrics,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationOptions;
    use crate::scene::{LayoutConfig, SiteConfig};
    use crate::synthetic::clear_sky_year;

    fn config(layout: LayoutConfig) -> ResolvedConfig {
        ResolvedConfig {
            site: SiteConfig::lanna(),
            layout,
            options: SimulationOptions {
                dome_step: 10.0,
                pose_bucket: 2.0,
                require_full_year: false,
                ..Default::default()
            },
        }
    }

    fn june_week() -> Vec<WeatherRecord> {
        clear_sky_year(&SiteConfig::lanna(), 2018)
            .into_iter()
            .filter(|r| r.timestamp.month() == 6 && r.timestamp.day() <= 7)
            .collect()
    }

    #[test]
    fn open_field_has_no_reduction() {
        let mut l = LayoutConfig::one_axis();
        l.n_panels = 0;
        let out = Simulator::new(config(l))
            .unwrap()
            .run(&june_week())
            .unwrap();
        assert_eq!(out.metrics.par_reduction, 0.0);
        assert!((out.metrics.lhi - 100.0).abs() < 1e-9);
    }

    #[test]
    fn shaded_never_exceeds_unshaded() {
        let out = Simulator::new(config(LayoutConfig::vertical()))
            .unwrap()
            .run(&june_week())
            .unwrap();
        assert!(out
            .map
            .shaded
            .iter()
            .zip(&out.map.unshaded)
            .all(|(s, u)| *s >= 0.0 && s <= u));
        assert!(out.metrics.par_reduction > 0.0 && out.metrics.par_reduction < 100.0);
        assert_eq!(out.stats.pose_keys, 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let recs = june_week();
        let mut c = config(LayoutConfig::two_axis());
        c.options.workers = Some(1);
        let a = Simulator::new(c.clone()).unwrap().run(&recs).unwrap();
        c.options.workers = Some(3);
        let b = Simulator::new(c).unwrap().run(&recs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_year_checks() {
        let mut c = config(LayoutConfig::vertical());
        c.options.require_full_year = true;
        let sim = Simulator::new(c).unwrap();
        assert!(matches!(
            sim.run(&june_week()),
            Err(SimError::Par(ParError::InsufficientCoverage { .. }))
        ));
        let mut recs = june_week();
        recs[3].timestamp = recs[3].timestamp.with_year(2019).unwrap();
        assert!(matches!(
            sim.run(&recs),
            Err(SimError::MixedYears(2018, 2019))
        ));
        assert!(matches!(sim.run(&[]), Err(SimError::NoRecords)));
    }

    #[test]
    fn vertical_series_has_constant_diffuse() {
        let sim = Simulator::new(config(LayoutConfig::vertical())).unwrap();
        let rows = sim
            .shading_series(&representative_days(2018)[..2], None)
            .unwrap();
        assert_eq!(rows.len(), 48);
        assert!(rows.iter().all(|r| r.f_d == rows[0].f_d));
        assert!(rows.iter().filter(|r| r.night).all(|r| r.f_b == 0.0));
        let lo = NaiveDate::from_ymd_opt(2018, 4, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let hi = NaiveDate::from_ymd_opt(2018, 12, 31)
            .unwrap()
            .and_hms_opt(23, 0, 0)
            .unwrap();
        assert!(matches!(
            sim.shading_series(&representative_days(2018), Some((lo, hi))),
            Err(SimError::DateOutsideWeather(_))
        ));
    }

    #[test]
    fn compare_arity_and_site() {
        let recs = june_week();
        let one = vec![("v".to_string(), config(LayoutConfig::vertical()))];
        assert!(matches!(compare(&one, &recs), Err(SimError::Arity(1))));
        let mut other = config(LayoutConfig::one_axis());
        other.site = SiteConfig::klingenberg();
        let two = vec![one[0].clone(), ("o".to_string(), other)];
        assert!(matches!(
            compare(&two, &recs),
            Err(SimError::MismatchedWeather)
        ));
    }
}
