//! Panel posing, shadow projection onto the ground, exact shaded area and
//! per-cell beam occlusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{union_area, ConvexPolygon, Point2, Rect, Rotation3, Vector3};
use crate::real::{Degrees, Real};
use crate::scene::{CropArea, PanelQuad, Scene};
use crate::tracking::TrackerAngles;

/// Boundary tolerance for point-in-polygon and rasterisation [m].
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ShadeError {
    #[error("sun direction parallel to the projection plane")]
    DegenerateProjection,
    #[error("sun at or below the horizon: no beam")]
    NoBeam,
}

/// Rotation applied to panel offsets from their centre: first about the
/// tracker axis (y) by `omega_itc`, then about the panel's own east-west axis
/// by `beta_itc`. The normal of a posed flat panel is
/// `(sin ω cos β, sin β, cos ω cos β)`.
pub fn pose_rotation<T: Real>(angles: &TrackerAngles<T>) -> Rotation3<T> {
    Rotation3::about_y(angles.omega_itc) * Rotation3::about_x(-angles.beta_itc)
}

/// Rotates the corners about the panel centre.
pub fn pose_panel<T: Real>(quad: &PanelQuad<T>, angles: &TrackerAngles<T>) -> PanelQuad<T> {
    rotate_about_center(quad, &pose_rotation(angles))
}

pub fn rotate_about_center<T: Real>(quad: &PanelQuad<T>, r: &Rotation3<T>) -> PanelQuad<T> {
    let c = quad.center;
    PanelQuad {
        corners: quad.corners.map(|p| r.apply(&(p - c)) + c),
        center: c,
        row_index: quad.row_index,
    }
}

/// Poses every panel of the scene, including the axis-tilt frame.
pub fn pose_scene<T: Real>(scene: &Scene<T>, angles: &TrackerAngles<T>) -> Vec<PanelQuad<T>> {
    let mut r = pose_rotation(angles);
    if scene.frame.axis_tilt != 0.0 {
        r = scene.scene_to_tracker().transpose() * r;
    }
    scene
        .panels
        .iter()
        .map(|q| rotate_about_center(q, &r))
        .collect()
}

/// Unit normal of a plane with orientation `gamma` and tilt `delta` (degrees):
/// `(cos γ sin δ, sin γ sin δ, cos δ)`.
pub fn plane_normal<T: Real>(gamma: T, delta: T) -> Vector3<T> {
    Vector3::new(
        gamma.cosd() * delta.sind(),
        gamma.sind() * delta.sind(),
        delta.cosd(),
    )
}

/// Projects `p` along `s` onto the plane through the origin with normal `n`.
pub fn project_point<T: Real>(
    p: &Vector3<T>,
    s: &Vector3<T>,
    n: &Vector3<T>,
) -> Result<Vector3<T>, ShadeError> {
    let denom = n.dot(s);
    if denom.abs() <= T::epsilon() {
        return Err(ShadeError::DegenerateProjection);
    }
    let t = -n.dot(p) / denom;
    Ok(*p + *s * t)
}

/// Ground-plane shadow point of `p` for sun direction `s` (`t = −P_z / s_z`).
pub fn project_to_ground<T: Real>(p: &Vector3<T>, s: &Vector3<T>) -> Result<Point2<T>, ShadeError> {
    if s.z <= T::zero() {
        return Err(ShadeError::NoBeam);
    }
    let t = -p.z / s.z;
    Ok(Point2::new(p.x + s.x * t, p.y + s.y * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowPolygon<T> {
    pub polygon: ConvexPolygon<T>,
    pub panel: usize,
}

/// One ground shadow per panel, in outline order.
pub fn shadow_polygons<T: Real>(
    posed: &[PanelQuad<T>],
    s: &Vector3<T>,
) -> Result<Vec<ShadowPolygon<T>>, ShadeError> {
    posed
        .iter()
        .enumerate()
        .map(|(panel, q)| {
            let pts = q
                .outline()
                .iter()
                .map(|p| project_to_ground(p, s))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ShadowPolygon {
                polygon: ConvexPolygon::new(pts),
                panel,
            })
        })
        .collect()
}

/// Shaded area inside the crop rectangle with overlaps counted once.
pub fn union_area_clipped<T: Real>(polygons: &[ShadowPolygon<T>], crop: &CropArea<T>) -> T {
    let polys: Vec<ConvexPolygon<T>> = polygons.iter().map(|p| p.polygon.clone()).collect();
    union_area(&polys, &crop.rect())
}

/// `A_shade / A_tot`, clamped to [0, 1].
pub fn beam_shading_factor<T: Real>(a_shade: T, a_tot: T) -> T {
    (a_shade / a_tot).max(T::zero()).min(T::one())
}

/// Exact beam shading factor of posed panels for sun direction `s`; zero at night.
pub fn beam_factor_exact<T: Real>(posed: &[PanelQuad<T>], s: &Vector3<T>, crop: &CropArea<T>) -> T {
    if s.z <= T::zero() {
        return T::zero();
    }
    match shadow_polygons(posed, s) {
        Ok(polys) => beam_shading_factor(union_area_clipped(&polys, crop), crop.area()),
        Err(_) => T::zero(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundOcclusionMap {
    pub shaded: Vec<bool>,
    /// Shaded cells over total cells.
    pub f_b: f64,
    pub night: bool,
}

impl GroundOcclusionMap {
    pub fn night(cells: usize) -> Self {
        Self {
            shaded: vec![false; cells],
            f_b: 0.0,
            night: true,
        }
    }
}

/// Calls `f` once per cell whose centre lies inside `poly` (boundary inclusive).
pub fn for_each_covered_cell<T: Real>(
    poly: &ConvexPolygon<T>,
    crop: &CropArea<T>,
    mut f: impl FnMut(usize),
) {
    let Some(bb) = poly.bbox() else { return };
    let tol = T::lit(BOUNDARY_TOL);
    let res = crop.grid_resolution;
    let half = T::lit(0.5);
    let Some((iy0, iy1)) = index_range(bb.min.y - tol, bb.max.y + tol, crop.origin.y, res, crop.ny)
    else {
        return;
    };
    for iy in iy0..=iy1 {
        let yc = crop.origin.y + (T::from_usize(iy).unwrap() + half) * res;
        let probe = yc.max(bb.min.y).min(bb.max.y);
        let Some((xl, xr)) = poly.x_range_at(probe) else {
            continue;
        };
        let Some((ix0, ix1)) = index_range(xl - tol, xr + tol, crop.origin.x, res, crop.nx) else {
            continue;
        };
        let base = iy * crop.nx;
        for ix in ix0..=ix1 {
            f(base + ix);
        }
    }
}

/// Row spans `(iy, ix0, ix1)` of lattice cells covered by `poly`, on the crop's
/// lattice extended beyond the grid and limited to the inclusive index windows
/// `rows` and `cols`.
pub fn lattice_spans<T: Real>(
    poly: &ConvexPolygon<T>,
    crop: &CropArea<T>,
    rows: (i64, i64),
    cols: (i64, i64),
) -> Vec<(i64, i64, i64)> {
    let mut out = Vec::new();
    let Some(bb) = poly.bbox() else { return out };
    let tol = T::lit(BOUNDARY_TOL);
    let res = crop.grid_resolution;
    let half = T::lit(0.5);
    let first = |lo: T, o: T| ((lo - o) / res - half).ceil();
    let last = |hi: T, o: T| ((hi - o) / res - half).floor();
    let (Some(iy0), Some(iy1)) = (
        first(bb.min.y - tol, crop.origin.y).to_i64(),
        last(bb.max.y + tol, crop.origin.y).to_i64(),
    ) else {
        return out;
    };
    for iy in iy0.max(rows.0)..=iy1.min(rows.1) {
        let yc = crop.origin.y + (T::from_i64(iy).unwrap() + half) * res;
        let probe = yc.max(bb.min.y).min(bb.max.y);
        let Some((xl, xr)) = poly.x_range_at(probe) else {
            continue;
        };
        let (Some(ix0), Some(ix1)) = (
            first(xl - tol, crop.origin.x).to_i64(),
            last(xr + tol, crop.origin.x).to_i64(),
        ) else {
            continue;
        };
        let (ix0, ix1) = (ix0.max(cols.0), ix1.min(cols.1));
        if ix0 <= ix1 {
            out.push((iy, ix0, ix1));
        }
    }
    out
}

/// Cells whose centre `origin + (i + ½) res` lies in `[lo, hi]`.
fn index_range<T: Real>(lo: T, hi: T, origin: T, res: T, n: usize) -> Option<(usize, usize)> {
    if n == 0 {
        return None;
    }
    let half = T::lit(0.5);
    let first = ((lo - origin) / res - half).ceil();
    let last = ((hi - origin) / res - half).floor();
    let first = first.max(T::zero());
    let last = last.min(T::from_usize(n - 1).unwrap());
    if first > last {
        return None;
    }
    Some((first.to_usize()?, last.to_usize()?))
}

/// Per-cell beam occlusion: a cell is shaded iff its centre lies in any shadow polygon.
pub fn cell_occlusion<T: Real>(
    posed: &[PanelQuad<T>],
    s: &Vector3<T>,
    crop: &CropArea<T>,
) -> GroundOcclusionMap {
    let n = crop.cell_count();
    if s.z <= T::zero() {
        return GroundOcclusionMap::night(n);
    }
    let mut shaded = vec![false; n];
    if let Ok(polys) = shadow_polygons(posed, s) {
        for p in &polys {
            for_each_covered_cell(&p.polygon, crop, |i| shaded[i] = true);
        }
    }
    let count = shaded.iter().filter(|b| **b).count();
    GroundOcclusionMap {
        f_b: if n == 0 { 0.0 } else { count as f64 / n as f64 },
        shaded,
        night: false,
    }
}

/// Area of receiver panels shaded by panels of *other rows*, summed over
/// occluder/receiver pairs (an upper bound on the union). Zero means no
/// inter-row mutual shading.
pub fn mutual_shading_area<T: Real>(posed: &[PanelQuad<T>], s: &Vector3<T>) -> T {
    let mut total = T::zero();
    for recv in posed {
        let n = recv.normal();
        let denom = s.dot(&n);
        if denom.abs() <= T::epsilon() {
            continue;
        }
        let origin = recv.corners[0];
        let e_len = recv.corners[2] - origin;
        let e_wid = recv.corners[1] - origin;
        let (len, wid) = (e_len.norm(), e_wid.norm());
        let (u_axis, v_axis) = (e_len * (T::one() / len), e_wid * (T::one() / wid));
        let window = Rect::new(Point2::new(T::zero(), T::zero()), Point2::new(len, wid));
        for occ in posed.iter().filter(|o| o.row_index != recv.row_index) {
            // distance along +s from the receiver plane to each occluder corner
            let outline = occ.outline();
            let depth: Vec<T> = outline
                .iter()
                .map(|p| (*p - origin).dot(&n) / denom)
                .collect();
            let front = clip_front(&outline, &depth);
            if front.len() < 3 {
                continue;
            }
            let local: Vec<Point2<T>> = front
                .iter()
                .map(|(p, d)| {
                    let q = *p - *s * *d - origin;
                    Point2::new(q.dot(&u_axis), q.dot(&v_axis))
                })
                .collect();
            total += ConvexPolygon::new(local).clip_rect(&window).area();
        }
    }
    total
}

/// Part of a 3D polygon with non-negative depth (in front of the receiver, toward the sun).
fn clip_front<T: Real>(pts: &[Vector3<T>], depth: &[T]) -> Vec<(Vector3<T>, T)> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let j = (i + 1) % n;
        let (dp, dq) = (depth[i], depth[j]);
        if dp >= T::zero() {
            out.push((pts[i], dp));
        }
        if (dp >= T::zero()) != (dq >= T::zero()) {
            let t = dp / (dp - dq);
            out.push((pts[i] + (pts[j] - pts[i]) * t, T::zero()));
        }
    }
    out
}
