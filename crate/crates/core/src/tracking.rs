//! Panel orientation per timestep: ideal tracking, backtracking and tilt limits.
//!
//! Angles are in degrees. The first-axis tilt `omega` is a rotation about the
//! tracker (north-south) axis, positive toward west; the second-axis tilt
//! `beta` tips the panel toward south when positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rotation3, Vector3};
use crate::real::{Degrees, Real};
use crate::scene::{LayoutConfig, SystemKind};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum TrackingError {
    #[error("sun below the tracker horizon")]
    SunBelowHorizon,
}

/// How the ideal second-axis angle is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondAxisMode {
    /// `atan2(y', sqrt(x'² + z'²))`: the panel normal ends up on the sun.
    #[default]
    SunPointing,
    /// `atan(y' / sqrt(x'² + y'²))`, kept for comparison.
    PaperLiteral,
}

/// Tracker geometry normalised for the backtracking formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisGeometry<T> {
    /// East-west axis distance over panel dimension across the axis.
    pub l_ew: T,
    /// North-south axis distance over panel width (two-axis only).
    pub l_ns_ratio: T,
    pub axis_azimuth: T,
    pub axis_tilt: T,
    pub tilt_min: T,
    pub tilt_max: T,
}

impl<T: Real> AxisGeometry<T> {
    pub fn from_layout(layout: &LayoutConfig) -> Self {
        Self {
            l_ew: T::lit(layout.l_ew()),
            l_ns_ratio: T::lit(layout.l_ns_ratio()),
            axis_azimuth: T::lit(layout.panel_azimuth),
            axis_tilt: T::lit(layout.axis_tilt),
            tilt_min: T::lit(layout.tilt_min),
            tilt_max: T::lit(layout.tilt_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackerAngles<T> {
    pub omega_it: T,
    pub omega_itc: T,
    pub beta_it: T,
    pub beta_itc: T,
    /// Shaded fraction at the ideal first-axis tilt.
    pub sf: T,
    /// True when the first-axis backtracking correction was applied.
    pub backtracked: bool,
}

impl<T: Real> TrackerAngles<T> {
    /// Fixed pose with first-axis tilt `omega` and no second rotation.
    pub fn fixed(omega: T) -> Self {
        Self {
            omega_it: omega,
            omega_itc: omega,
            ..Self::default()
        }
    }
}

/// Pose for one timestep, or a night marker when the sun is below the tracker horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pose<T> {
    Day(TrackerAngles<T>),
    Night,
}

/// Solar vector in the tracker frame, for axis azimuth `alpha_z` and axis tilt `beta_z`.
pub fn axis_frame<T: Real>(s: &Vector3<T>, alpha_z: T, beta_z: T) -> Vector3<T> {
    axis_frame_matrix(alpha_z, beta_z).apply(s)
}

pub fn axis_frame_matrix<T: Real>(alpha_z: T, beta_z: T) -> Rotation3<T> {
    let (sa, ca) = (alpha_z.sind(), alpha_z.cosd());
    let (sb, cb) = (beta_z.sind(), beta_z.cosd());
    Rotation3::from_rows([
        [ca, -sa, T::zero()],
        [cb * sa, cb * ca, -sb],
        [sb * sa, sb * ca, cb],
    ])
}

/// `atan2(x', z')` in degrees.
pub fn ideal_tilt<T: Real>(s: &Vector3<T>) -> Result<T, TrackingError> {
    if s.z <= T::zero() {
        return Err(TrackingError::SunBelowHorizon);
    }
    Ok(s.x.atan2(s.z).to_degrees())
}

/// Shadow length `1/cos ω` and shaded fraction `max(0, 1 − L_EW / s)`.
pub fn shaded_fraction<T: Real>(omega_it: T, l_ew: T) -> T {
    let shadow = T::one() / omega_it.cosd();
    (T::one() - l_ew / shadow).max(T::zero())
}

/// True when the ideal tilt would shade the neighbouring row.
pub fn backtracking_active<T: Real>(omega_it: T, l_ew: T) -> bool {
    l_ew * omega_it.cosd() < T::one()
}

/// Backtracked first-axis tilt, clamped to `[tilt_min, tilt_max]`.
pub fn backtrack_tilt<T: Real>(omega_it: T, l_ew: T, tilt_min: T, tilt_max: T) -> T {
    let arg = l_ew * omega_it.cosd();
    let corrected = if arg >= T::one() {
        omega_it
    } else {
        let omega_c = arg.max(-T::one()).acos().to_degrees();
        omega_it - omega_it.signum() * omega_c
    };
    corrected.max(tilt_min).min(tilt_max)
}

/// Ideal second-axis tilt from the tracker-frame sun vector.
pub fn ideal_second_axis<T: Real>(
    s: &Vector3<T>,
    mode: SecondAxisMode,
) -> Result<T, TrackingError> {
    if s.z <= T::zero() {
        return Err(TrackingError::SunBelowHorizon);
    }
    Ok(match mode {
        SecondAxisMode::SunPointing => s.y.atan2((s.x * s.x + s.z * s.z).sqrt()).to_degrees(),
        SecondAxisMode::PaperLiteral => {
            let r = (s.x * s.x + s.y * s.y).sqrt();
            if r == T::zero() {
                T::zero()
            } else {
                (s.y / r).atan().to_degrees()
            }
        }
    })
}

/// Second-axis tilt after the north-south spacing correction, clamped.
pub fn backtrack_second_axis<T: Real>(beta_it: T, l_ns_ratio: T, tilt_min: T, tilt_max: T) -> T {
    let arg = l_ns_ratio * beta_it.cosd();
    let corrected = if arg >= T::one() {
        beta_it
    } else {
        beta_it.signum() * arg.max(-T::one()).acos().to_degrees()
    };
    corrected.max(tilt_min).min(tilt_max)
}

/// Orientation for one timestep. `s_tracker` is the solar vector already
/// transformed with [`axis_frame`].
pub fn pose_for<T: Real>(
    kind: SystemKind,
    fixed_tilt: T,
    geometry: &AxisGeometry<T>,
    s_tracker: &Vector3<T>,
    mode: SecondAxisMode,
) -> Pose<T> {
    if s_tracker.z <= T::zero() {
        return Pose::Night;
    }
    match kind {
        SystemKind::Vertical => Pose::Day(TrackerAngles::fixed(fixed_tilt)),
        SystemKind::OneAxis | SystemKind::TwoAxis => {
            let Ok(omega_it) = ideal_tilt(s_tracker) else {
                return Pose::Night;
            };
            let sf = shaded_fraction(omega_it, geometry.l_ew);
            let omega_itc = backtrack_tilt(
                omega_it,
                geometry.l_ew,
                geometry.tilt_min,
                geometry.tilt_max,
            );
            let backtracked = backtracking_active(omega_it, geometry.l_ew);
            let (beta_it, beta_itc) = if kind == SystemKind::TwoAxis {
                let Ok(b) = ideal_second_axis(s_tracker, mode) else {
                    return Pose::Night;
                };
                (
                    b,
                    backtrack_second_axis(
                        b,
                        geometry.l_ns_ratio,
                        geometry.tilt_min,
                        geometry.tilt_max,
                    ),
                )
            } else {
                (T::zero(), T::zero())
            };
            Pose::Day(TrackerAngles {
                omega_it,
                omega_itc,
                beta_it,
                beta_itc,
                sf,
                backtracked,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn axis_frame_identity_and_tilt() {
        let s = Vector3::new(0.3, -0.4, 0.866_025_403_784_438_6);
        assert_eq!(axis_frame(&s, 0.0, 0.0), s);
        let z = axis_frame(&Vector3::new(0.0, 0.0, 1.0), 0.0, 30.0);
        close(z.x, 0.0, 1e-15);
        close(z.y, -0.5, 1e-15);
        close(z.z, 0.866_025_403_784_438_6, 1e-15);
    }

    #[test]
    fn axis_frame_azimuth_matches_matrix_product() {
        // x' = x cos a - y sin a, y' = x sin a + y cos a for zero axis tilt
        let s = Vector3::new(1.0, 0.0, 0.0);
        let r = axis_frame(&s, 90.0, 0.0);
        close(r.x, 0.0, 1e-15);
        close(r.y, 1.0, 1e-15);
        close(r.z, 0.0, 1e-15);
        assert!((r.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ideal_tilt_examples() {
        close(ideal_tilt(&Vector3::new(0.0, 0.3, 0.9)).unwrap(), 0.0, 0.0);
        close(
            ideal_tilt(&Vector3::new(0.5, 0.0, 0.5)).unwrap(),
            45.0,
            1e-12,
        );
        close(
            ideal_tilt(&Vector3::new(0.9962, 0.0, 0.0872)).unwrap(),
            85.0,
            0.01,
        );
        assert_eq!(
            ideal_tilt(&Vector3::new(0.5, 0.0, -0.1)),
            Err(TrackingError::SunBelowHorizon)
        );
    }

    #[test]
    fn shaded_fraction_examples() {
        close(shaded_fraction(0.0, 2.0), 0.0, 0.0);
        let s = 1.0 / 85f64.to_radians().cos();
        close(s, 11.474, 1e-3);
        close(shaded_fraction(85.0, 10.0), 1.0 - 10.0 / s, 1e-12);
        close(shaded_fraction(85.0, 10.0), 0.1285, 1e-4);
        close(shaded_fraction(89.9, 1e9), 0.0, 0.0);
    }

    #[test]
    fn backtrack_examples() {
        close(backtrack_tilt(30.0, 10.0, -60.0, 60.0), 30.0, 0.0);
        // 85 - acos(10 cos 85°) and 70 - acos(2 cos 70°), evaluated independently
        close(backtrack_tilt(85.0, 10.0, -60.0, 60.0), 55.640_130, 1e-5);
        close(backtrack_tilt(70.0, 2.0, -60.0, 60.0), 23.160_178, 1e-5);
        close(backtrack_tilt(-70.0, 2.0, -60.0, 60.0), -23.160_178, 1e-5);
        close(backtrack_tilt(75.0, 10.0, -60.0, 60.0), 60.0, 0.0);
    }

    #[test]
    fn second_axis_examples() {
        let s = Vector3::new(0.0, 0.707_106_781_186_547_5, 0.707_106_781_186_547_5);
        close(
            ideal_second_axis(&s, SecondAxisMode::SunPointing).unwrap(),
            45.0,
            1e-12,
        );
        close(
            ideal_second_axis(&s, SecondAxisMode::PaperLiteral).unwrap(),
            45.0,
            1e-12,
        );
        let flat = Vector3::new(0.6, 0.0, 0.8);
        close(
            ideal_second_axis(&flat, SecondAxisMode::SunPointing).unwrap(),
            0.0,
            0.0,
        );
        close(
            ideal_second_axis(&flat, SecondAxisMode::PaperLiteral).unwrap(),
            0.0,
            0.0,
        );

        close(backtrack_second_axis(10.0, 2.0, -90.0, 90.0), 10.0, 0.0);
        close(backtrack_second_axis(80.0, 2.0, -90.0, 90.0), 69.68, 0.01);
        close(backtrack_second_axis(80.0, 2.0, -60.0, 60.0), 60.0, 0.0);
    }

    #[test]
    fn vertical_pose_is_constant() {
        let g = AxisGeometry::<f64>::from_layout(&LayoutConfig::vertical());
        for s in [Vector3::new(0.1, 0.2, 0.97), Vector3::new(-0.8, 0.5, 0.33)] {
            let Pose::Day(a) = pose_for(
                SystemKind::Vertical,
                90.0,
                &g,
                &s.normalized(),
                SecondAxisMode::SunPointing,
            ) else {
                panic!()
            };
            assert_eq!(a.omega_itc, 90.0);
            assert_eq!(a.beta_itc, 0.0);
        }
    }

    #[test]
    fn night_marker() {
        let g = AxisGeometry::<f64>::from_layout(&LayoutConfig::one_axis());
        let s = Vector3::new(0.3, 0.3, -0.2).normalized();
        assert_eq!(
            pose_for(
                SystemKind::OneAxis,
                0.0,
                &g,
                &s,
                SecondAxisMode::SunPointing
            ),
            Pose::Night
        );
    }

    #[test]
    fn noon_one_axis_is_flat() {
        let g = AxisGeometry::<f64>::from_layout(&LayoutConfig::one_axis());
        let s = Vector3::new(0.0, 0.6, 0.8);
        let Pose::Day(a) = pose_for(
            SystemKind::OneAxis,
            0.0,
            &g,
            &s,
            SecondAxisMode::SunPointing,
        ) else {
            panic!()
        };
        assert_eq!(a.omega_itc, 0.0);
        assert!(!a.backtracked);
    }

    #[test]
    fn generic_over_f32() {
        let t: f32 = backtrack_tilt(70.0f32, 2.0, -60.0, 60.0);
        assert!((t - 23.160_18).abs() < 1e-3);
    }
}
