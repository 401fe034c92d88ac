//! Synthetic clear-sky weather for runs without measured data.

use chrono::{Datelike, Duration, NaiveDate};

use crate::par::WeatherRecord;
use crate::scene::SiteConfig;
use crate::solar::{extraterrestrial_horizontal, haurwitz_clearsky, solar_position};

/// Broadband PAR share of GHI used for synthetic records.
pub const PAR_SHARE: f64 = 0.5;

/// Diffuse fraction from the clearness index (Erbs et al.).
pub fn erbs_diffuse_fraction(k_t: f64) -> f64 {
    if k_t <= 0.22 {
        1.0 - 0.09 * k_t
    } else if k_t <= 0.8 {
        0.9511 - 0.1604 * k_t + 4.388 * k_t.powi(2) - 16.638 * k_t.powi(3) + 12.336 * k_t.powi(4)
    } else {
        0.165
    }
}

/// Hourly clear-sky records for a whole calendar year.
///
/// GHI is the Haurwitz clear-sky value at the interval midpoint, PAR is half
/// of it, and the satellite diffuse fraction comes from the Erbs correlation.
pub fn clear_sky_year(site: &SiteConfig, year: i32) -> Vec<WeatherRecord> {
    let start = NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let mut out = Vec::with_capacity(8784);
    let mut t = start;
    while t.year() == year {
        let mid = t + Duration::minutes(30);
        let (ghi, k_d_sat) = match solar_position(&mid, site) {
            Ok(pos) if pos.is_up() => {
                let ghi = haurwitz_clearsky(pos.elevation);
                let e_ext = extraterrestrial_horizontal(&mid, &pos);
                let k_t = if e_ext > 0.0 {
                    (ghi / e_ext).min(1.0)
                } else {
                    0.0
                };
                (ghi, erbs_diffuse_fraction(k_t).clamp(0.0, 1.0))
            }
            _ => (0.0, 1.0),
        };
        out.push(WeatherRecord {
            timestamp: t,
            ghi,
            par_total: PAR_SHARE * ghi,
            k_d_sat: Some(k_d_sat),
            g_cs: None,
            k_d_measured: None,
        });
        t += Duration::hours(1);
    }
    out
}
