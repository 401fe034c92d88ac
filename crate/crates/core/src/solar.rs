//! Solar position, solar vector, apparent solar time, extraterrestrial and
//! clear-sky irradiance.
//!
//! The ephemeris is the Meeus low-precision solar theory (as popularised by
//! the NOAA solar calculator): about 0.01° in elevation and azimuth for
//! 1950-2100, without atmospheric refraction.
//!
//! Azimuth convention: **0° = south, positive toward west**, range (−180, 180].
//! With this convention the solar vector `(cos α sin γ, cos α cos γ, sin α)`
//! is expressed in the scene frame (x west, y south, z up).

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vector3;
use crate::scene::SiteConfig;

/// Solar constant [W/m²].
pub const SOLAR_CONSTANT: f64 = 1367.0;

#[derive(Debug, Error, PartialEq)]
pub enum SolarError {
    #[error("timestamp {0} outside supported range 1950-2100")]
    TimestampOutOfRange(NaiveDateTime),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarPosition {
    /// Elevation above the horizon [deg].
    pub elevation: f64,
    /// Azimuth, 0 = south, positive west [deg].
    pub azimuth: f64,
}

impl SolarPosition {
    pub fn zenith(&self) -> f64 {
        90.0 - self.elevation
    }

    pub fn is_up(&self) -> bool {
        self.elevation > 0.0
    }
}

/// Unit vector toward the sun in the scene frame.
pub type SolarVector = Vector3<f64>;

/// Horizontal extraterrestrial irradiance, clear-sky GHI and apparent solar time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiationScalars {
    pub e_ext: f64,
    pub g_cs: f64,
    /// Hours in [0, 24).
    pub ast: f64,
}

struct SunTerms {
    declination: f64,
    /// Equation of time [min].
    eot: f64,
}

fn julian_day(t: &NaiveDateTime) -> f64 {
    let unix = t.and_utc().timestamp() as f64 + f64::from(t.nanosecond()) * 1e-9;
    unix / 86_400.0 + 2_440_587.5
}

fn sun_terms(t: &NaiveDateTime) -> SunTerms {
    let jc = (julian_day(t) - 2_451_545.0) / 36_525.0;
    let l0 = (280.466_46 + jc * (36_000.769_83 + jc * 0.000_303_2)).rem_euclid(360.0);
    let m = 357.529_11 + jc * (35_999.050_29 - 0.000_153_7 * jc);
    let e = 0.016_708_634 - jc * (0.000_042_037 + 0.000_000_126_7 * jc);
    let mr = m.to_radians();
    let c = mr.sin() * (1.914_602 - jc * (0.004_817 + 0.000_014 * jc))
        + (2.0 * mr).sin() * (0.019_993 - 0.000_101 * jc)
        + (3.0 * mr).sin() * 0.000_289;
    let true_long = l0 + c;
    let omega = (125.04 - 1_934.136 * jc).to_radians();
    let app_long = true_long - 0.005_69 - 0.004_78 * omega.sin();
    let eps0 =
        23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.000_59 - jc * 0.001_813))) / 60.0) / 60.0;
    let eps = (eps0 + 0.002_56 * omega.cos()).to_radians();
    let declination = (eps.sin() * app_long.to_radians().sin()).asin();

    let y = (eps / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eot = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        .to_degrees();
    SunTerms { declination, eot }
}

fn check_range(t: &NaiveDateTime) -> Result<(), SolarError> {
    if (1950..=2100).contains(&t.year()) {
        Ok(())
    } else {
        Err(SolarError::TimestampOutOfRange(*t))
    }
}

fn utc_hours(t: &NaiveDateTime) -> f64 {
    f64::from(t.hour())
        + f64::from(t.minute()) / 60.0
        + (f64::from(t.second()) + f64::from(t.nanosecond()) * 1e-9) / 3600.0
}

/// Equation of time [min] at `t` (UTC).
pub fn equation_of_time(t: &NaiveDateTime) -> f64 {
    sun_terms(t).eot
}

/// Topocentric solar elevation and azimuth (no refraction) at `t` (UTC).
pub fn solar_position(t: &NaiveDateTime, site: &SiteConfig) -> Result<SolarPosition, SolarError> {
    check_range(t)?;
    let terms = sun_terms(t);
    let tst_min = (utc_hours(t) * 60.0 + terms.eot + 4.0 * site.longitude).rem_euclid(1440.0);
    let hour_angle = (tst_min / 4.0 - 180.0).to_radians();
    let phi = site.latitude.to_radians();
    let dec = terms.declination;

    let sin_el = phi.sin() * dec.sin() + phi.cos() * dec.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin().to_degrees();
    // Measured from south, positive toward west.
    let azimuth = hour_angle
        .sin()
        .atan2(hour_angle.cos() * phi.sin() - dec.tan() * phi.cos())
        .to_degrees();
    let azimuth = if azimuth <= -180.0 {
        azimuth + 360.0
    } else {
        azimuth
    };
    Ok(SolarPosition { elevation, azimuth })
}

/// `(cos α sin γ, cos α cos γ, sin α)`.
pub fn solar_vector(pos: &SolarPosition) -> SolarVector {
    let (a, g) = (pos.elevation.to_radians(), pos.azimuth.to_radians());
    Vector3::new(a.cos() * g.sin(), a.cos() * g.cos(), a.sin())
}

/// Inverse of [`solar_vector`].
pub fn position_from_vector(s: &SolarVector) -> SolarPosition {
    let elevation = s.z.clamp(-1.0, 1.0).asin().to_degrees();
    let azimuth = s.x.atan2(s.y).to_degrees();
    SolarPosition { elevation, azimuth }
}

/// Earth-Sun distance correction `1 + 0.033 cos(2π n / 365)`.
pub fn eccentricity_correction(day_of_year: u32) -> f64 {
    1.0 + 0.033 * (2.0 * std::f64::consts::PI * f64::from(day_of_year) / 365.0).cos()
}

/// Extraterrestrial irradiance on a horizontal plane [W/m²].
pub fn extraterrestrial_horizontal(t: &NaiveDateTime, pos: &SolarPosition) -> f64 {
    extraterrestrial_for_day(t.ordinal(), pos.elevation)
}

pub fn extraterrestrial_for_day(day_of_year: u32, elevation: f64) -> f64 {
    SOLAR_CONSTANT * eccentricity_correction(day_of_year) * elevation.to_radians().sin().max(0.0)
}

/// Haurwitz clear-sky GHI, `1098 cos Z exp(−0.057 / cos Z)` [W/m²].
///
/// Fallback only: runs should supply a clear-sky column with the weather.
pub fn haurwitz_clearsky(elevation: f64) -> f64 {
    let cos_z = elevation.to_radians().sin();
    if cos_z <= 0.0 {
        return 0.0;
    }
    1098.0 * cos_z * (-0.057 / cos_z).exp()
}

/// Clear-sky GHI: the supplied column value when present, else [`haurwitz_clearsky`].
pub fn clearsky_ghi(pos: &SolarPosition, supplied: Option<f64>) -> f64 {
    if pos.elevation <= 0.0 {
        return 0.0;
    }
    match supplied {
        Some(v) => v.max(0.0),
        None => haurwitz_clearsky(pos.elevation),
    }
}

/// Apparent solar time [h]: UTC shifted by longitude (4 min/deg) and the equation of time.
pub fn apparent_solar_time(t: &NaiveDateTime, site: &SiteConfig) -> f64 {
    (utc_hours(t) + site.longitude / 15.0 + equation_of_time(t) / 60.0).rem_euclid(24.0)
}

pub fn radiation_scalars(
    t: &NaiveDateTime,
    site: &SiteConfig,
    pos: &SolarPosition,
    supplied_clearsky: Option<f64>,
) -> RadiationScalars {
    RadiationScalars {
        e_ext: extraterrestrial_horizontal(t, pos),
        g_cs: clearsky_ghi(pos, supplied_clearsky),
        ast: apparent_solar_time(t, site),
    }
}
