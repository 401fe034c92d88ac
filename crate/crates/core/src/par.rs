//! PAR decomposition, per-cell composition, annual accumulation and metrics.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solar::{RadiationScalars, SolarPosition};

/// PAR photon flux per watt: 1 W/m² = 4.57 µmol m⁻² s⁻¹.
pub const UMOL_PER_WATT: f64 = 4.57;
/// Records at or below this GHI [W/m²] are treated as dark.
pub const DARK_GHI: f64 = 1.0;
/// Minimum share of daylight hours a year of records must cover.
pub const MIN_COVERAGE: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParError {
    #[error("{timestamp}: no satellite or measured diffuse fraction available")]
    MissingDiffuseFraction { timestamp: NaiveDateTime },
    #[error("{timestamp}: {reason}")]
    InvalidRecord {
        timestamp: NaiveDateTime,
        reason: String,
    },
    #[error("insufficient coverage: {present} of {expected} daylight hours ({:.1}%)", 100.0 * *present as f64 / (*expected).max(1) as f64)]
    InsufficientCoverage { present: usize, expected: usize },
    #[error("degenerate map: {0}")]
    DegenerateMap(&'static str),
}

/// One hourly weather record. Irradiances in W/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    /// Interval start, UTC.
    pub timestamp: NaiveDateTime,
    pub ghi: f64,
    pub par_total: f64,
    pub k_d_sat: Option<f64>,
    pub g_cs: Option<f64>,
    pub k_d_measured: Option<f64>,
}

impl WeatherRecord {
    pub fn new(timestamp: NaiveDateTime, ghi: f64, par_total: f64) -> Self {
        Self {
            timestamp,
            ghi,
            par_total,
            k_d_sat: None,
            g_cs: None,
            k_d_measured: None,
        }
    }

    pub fn validate(&self) -> Result<(), ParError> {
        let fail = |reason: String| {
            Err(ParError::InvalidRecord {
                timestamp: self.timestamp,
                reason,
            })
        };
        if !(self.ghi >= 0.0 && self.ghi.is_finite()) {
            return fail(format!("GHI must be finite and ≥ 0, got {}", self.ghi));
        }
        if !(self.par_total >= 0.0 && self.par_total.is_finite()) {
            return fail(format!(
                "PAR must be finite and ≥ 0, got {}",
                self.par_total
            ));
        }
        for (name, v) in [("k_d_sat", self.k_d_sat), ("k_d", self.k_d_measured)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return fail(format!("{name} must lie in [0, 1], got {v}"));
                }
            }
        }
        if let Some(g) = self.g_cs {
            if !(g >= 0.0 && g.is_finite()) {
                return fail(format!("clear-sky GHI must be finite and ≥ 0, got {g}"));
            }
        }
        Ok(())
    }

    pub fn is_dark(&self) -> bool {
        self.ghi <= DARK_GHI
    }
}

/// Logistic decomposition coefficients: `c` and `beta[0..=6]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Yang2Coefficients {
    pub c: f64,
    pub beta: [f64; 7],
}

impl Default for Yang2Coefficients {
    fn default() -> Self {
        Self {
            c: 0.0888,
            beta: [-2.6258, 7.2506, -0.0458, 0.0099, -0.0839, 0.5002, -2.1731],
        }
    }
}

impl Yang2Coefficients {
    pub fn with_beta0(mut self, beta0: f64) -> Self {
        self.beta[0] = beta0;
        self
    }
}

/// Predictors of the decomposition model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Yang2Inputs {
    pub k_t: f64,
    pub delta_ktc: f64,
    pub k_de: f64,
    pub k_d_sat: f64,
    /// Apparent solar time [h].
    pub ast: f64,
    /// Solar zenith [deg].
    pub zenith: f64,
}

/// `(k_t, Δk_tc, k_de)` from GHI, clear-sky GHI and horizontal extraterrestrial irradiance.
pub fn clearness_terms(ghi: f64, g_cs: f64, e_ext: f64) -> (f64, f64, f64) {
    let k_t = ghi / e_ext;
    let delta_ktc = g_cs / e_ext - k_t;
    let k_de = (1.0 - g_cs / ghi).max(0.0);
    (k_t, delta_ktc, k_de)
}

/// Broadband diffuse fraction, clamped to `[0, 1]`.
pub fn yang2_diffuse_fraction(x: &Yang2Inputs, coef: &Yang2Coefficients) -> f64 {
    let b = &coef.beta;
    let e = b[0]
        + b[1] * x.k_t
        + b[2] * x.ast
        + b[3] * x.zenith
        + b[4] * x.delta_ktc
        + b[6] * x.k_d_sat;
    let k_d = coef.c + (1.0 - coef.c) / (1.0 + e.exp()) + b[5] * x.k_de;
    k_d.clamp(0.0, 1.0)
}

/// Diffuse share of PAR from the broadband diffuse fraction and solar elevation [deg].
pub fn spitters_par_fraction(k_d: f64, elevation: f64) -> f64 {
    let b = elevation.to_radians();
    let q = 1.0 - k_d * k_d;
    let s = (std::f64::consts::FRAC_PI_2 - b).cos();
    let v = (1.0 + 0.3 * q) * k_d / (1.0 + q * s * s * b.cos().powi(3));
    v.clamp(0.0, 1.0)
}

/// Where the broadband diffuse fraction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionSource {
    Yang2,
    Measured,
    /// Sun below the horizon at the evaluation instant: all light is diffuse.
    BelowHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub k_t: f64,
    pub delta_ktc: f64,
    pub k_de: f64,
    pub k_d: f64,
    pub k_d_par: f64,
    pub par_beam: f64,
    pub par_diffuse: f64,
    pub source: FractionSource,
}

/// Splits a record's PAR into beam and diffuse parts. `None` for dark records.
pub fn decompose(
    rec: &WeatherRecord,
    pos: &SolarPosition,
    scalars: &RadiationScalars,
    coef: &Yang2Coefficients,
) -> Result<Option<DecompositionResult>, ParError> {
    rec.validate()?;
    if rec.is_dark() {
        return Ok(None);
    }
    let split = |k_d: f64, k_d_par: f64, terms: (f64, f64, f64), source| {
        let par_diffuse = rec.par_total * k_d_par;
        DecompositionResult {
            k_t: terms.0,
            delta_ktc: terms.1,
            k_de: terms.2,
            k_d,
            k_d_par,
            par_beam: rec.par_total - par_diffuse,
            par_diffuse,
            source,
        }
    };
    if !pos.is_up() || scalars.e_ext <= 0.0 {
        return Ok(Some(split(
            1.0,
            1.0,
            (0.0, 0.0, 0.0),
            FractionSource::BelowHorizon,
        )));
    }
    let terms = clearness_terms(rec.ghi, scalars.g_cs, scalars.e_ext);
    let (k_d, source) = match (rec.k_d_measured, rec.k_d_sat) {
        (Some(k), _) => (k, FractionSource::Measured),
        (None, Some(k_d_sat)) => {
            let x = Yang2Inputs {
                k_t: terms.0,
                delta_ktc: terms.1,
                k_de: terms.2,
                k_d_sat,
                ast: scalars.ast,
                zenith: pos.zenith(),
            };
            (yang2_diffuse_fraction(&x, coef), FractionSource::Yang2)
        }
        (None, None) => {
            return Err(ParError::MissingDiffuseFraction {
                timestamp: rec.timestamp,
            })
        }
    };
    let k_d_par = spitters_par_fraction(k_d, pos.elevation);
    Ok(Some(split(k_d, k_d_par, terms, source)))
}

/// Shaded PAR reaching one cell [W/m²].
pub fn compose_cell_par(par_beam: f64, par_diffuse: f64, f_b: f64, f_d: f64) -> f64 {
    par_beam * (1.0 - f_b) + par_diffuse * (1.0 - f_d)
}

/// Annual per-cell PAR totals [kWh/m²].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParMap {
    pub nx: usize,
    pub ny: usize,
    /// Lower corner of the grid and cell size [m].
    pub origin: (f64, f64),
    pub resolution: f64,
    pub shaded: Vec<f64>,
    pub unshaded: Vec<f64>,
}

impl ParMap {
    pub fn new(nx: usize, ny: usize, origin: (f64, f64), resolution: f64) -> Self {
        Self {
            nx,
            ny,
            origin,
            resolution,
            shaded: vec![0.0; nx * ny],
            unshaded: vec![0.0; nx * ny],
        }
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (ix, iy) = (c % self.nx, c / self.nx);
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Adds one interval of PAR with per-cell factors; `dt` in hours.
    pub fn add(
        &mut self,
        par_beam: f64,
        par_diffuse: f64,
        f_b: impl Fn(usize) -> f64,
        f_d: impl Fn(usize) -> f64,
        dt: f64,
    ) {
        let k = dt / 1000.0;
        let total = (par_beam + par_diffuse) * k;
        for c in 0..self.shaded.len() {
            self.shaded[c] += compose_cell_par(par_beam, par_diffuse, f_b(c), f_d(c)) * k;
            self.unshaded[c] += total;
        }
    }

    /// Adds beam PAR blocked on cells flagged in `shaded_cells`.
    pub fn add_beam(&mut self, par_beam: f64, shaded_cells: &[bool], dt: f64) {
        let v = par_beam * dt / 1000.0;
        for (c, s) in shaded_cells.iter().enumerate() {
            if !s {
                self.shaded[c] += v;
            }
            self.unshaded[c] += v;
        }
    }

    /// Adds diffuse PAR attenuated by per-cell factors (empty slice means unshaded).
    pub fn add_diffuse(&mut self, par_diffuse: f64, f_d_cells: &[f64], dt: f64) {
        let v = par_diffuse * dt / 1000.0;
        for c in 0..self.shaded.len() {
            let f = f_d_cells.get(c).copied().unwrap_or(0.0);
            self.shaded[c] += v * (1.0 - f);
            self.unshaded[c] += v;
        }
    }

    /// Element-wise sum with a map of the same grid.
    pub fn merge(&mut self, other: &ParMap) {
        assert_eq!(self.shaded.len(), other.shaded.len(), "grid mismatch");
        for (a, b) in self.shaded.iter_mut().zip(&other.shaded) {
            *a += b;
        }
        for (a, b) in self.unshaded.iter_mut().zip(&other.unshaded) {
            *a += b;
        }
    }

    pub fn mean_shaded(&self) -> f64 {
        mean(&self.shaded)
    }

    pub fn mean_unshaded(&self) -> f64 {
        mean(&self.unshaded)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Dispersion measure used by the light homogeneity index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LhiMode {
    /// `100 (1 − s / x̄)` with the sample standard deviation `s`.
    #[default]
    StdDev,
    /// `100 (1 − s² / x̄)`.
    Variance,
}

impl std::str::FromStr for LhiMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "std-dev" | "std" => Ok(Self::StdDev),
            "variance" | "var" => Ok(Self::Variance),
            _ => Err(format!(
                "unknown LHI mode `{s}` (expected std-dev or variance)"
            )),
        }
    }
}

/// Light homogeneity index [%].
pub fn light_homogeneity_index(values: &[f64], mode: LhiMode) -> Result<f64, ParError> {
    if values.len() < 2 {
        return Err(ParError::DegenerateMap("fewer than two cells"));
    }
    let m = mean(values);
    if m <= 0.0 {
        return Err(ParError::DegenerateMap("mean PAR is zero"));
    }
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() - 1) as f64;
    let spread = match mode {
        LhiMode::StdDev => var.sqrt(),
        LhiMode::Variance => var,
    };
    Ok(100.0 * (1.0 - spread / m))
}

/// Total PAR reduction against the unshaded field [%].
pub fn par_reduction(map: &ParMap) -> Result<f64, ParError> {
    let unshaded: f64 = map.unshaded.iter().sum();
    if unshaded <= 0.0 {
        return Err(ParError::DegenerateMap("unshaded PAR is zero"));
    }
    let shaded: f64 = map.shaded.iter().sum();
    Ok((100.0 * (1.0 - shaded / unshaded)).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub lhi: f64,
    pub par_reduction: f64,
    /// Mean annual PAR with shading [kWh/m²/year].
    pub mean_par: f64,
    pub mean_unshaded_par: f64,
}

pub fn metrics(map: &ParMap, mode: LhiMode) -> Result<Metrics, ParError> {
    Ok(Metrics {
        lhi: light_homogeneity_index(&map.shaded, mode)?,
        par_reduction: par_reduction(map)?,
        mean_par: map.mean_shaded(),
        mean_unshaded_par: map.mean_unshaded(),
    })
}

/// Fails when fewer than 95 % of expected daylight hours are present.
pub fn check_coverage(present: usize, expected: usize) -> Result<f64, ParError> {
    if expected == 0 {
        return Ok(1.0);
    }
    let ratio = present as f64 / expected as f64;
    if ratio + 1e-12 < MIN_COVERAGE {
        return Err(ParError::InsufficientCoverage { present, expected });
    }
    Ok(ratio)
}
